#pragma once

// Feed-forward classifiers trained from scratch: a dense net (two hidden
// layers + softmax output) and a 1-D conv net (two conv layers, then the same
// three fully connected layers). Parameters live in one flat vector so EWC
// can snapshot and penalize them coordinate by coordinate.
//
// Flat parameter order, layer by layer, weights then biases:
//   dense: W[out][in], b[out]
//   conv:  W[out_ch][kernel][in_ch], b[out_ch]
// Conv activations are (time, channel) row-major, matching WindowedSample.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "rcl/common.hpp"
#include "rcl/data.hpp"

namespace rcl {

enum class NetKind { dense, conv };
enum class Activation { relu };

struct ConvLayerSpec {
  std::size_t out_channels = 8;
  std::size_t kernel = 5;
  std::size_t stride = 1;
  bool operator==(const ConvLayerSpec &) const = default;
};

struct NetSpec {
  NetKind kind = NetKind::dense;
  std::size_t window = 50;
  std::size_t channels = 2;
  std::size_t n_classes = 2;
  std::vector<std::size_t> hidden{64, 32};
  std::vector<ConvLayerSpec> conv{{8, 5, 1}, {16, 5, 1}};
  Activation activation = Activation::relu;
  std::uint64_t seed = 0;

  /// Same layer structure, ignoring the seed and class count.
  bool same_architecture(const NetSpec &o) const {
    return kind == o.kind && window == o.window && channels == o.channels &&
           hidden == o.hidden && (kind == NetKind::dense || conv == o.conv);
  }
};

struct NetModel {
  NetSpec spec;
  std::vector<double> params;
};

/// Quadratic anchor (lambda/2) * sum_j F_j (theta_j - theta*_j)^2.
struct EWCPenalty {
  double lambda = 0.0;
  std::vector<double> theta_star;
  std::vector<double> fisher;
};

enum class OptimizerKind { sgd, sgd_momentum };

struct TrainConfig {
  std::size_t epochs = 100;
  std::size_t batch_size = 32;
  double learning_rate = 0.01;
  OptimizerKind optimizer = OptimizerKind::sgd_momentum;
  double momentum = 0.9;
  std::uint64_t shuffle_seed = 0;
};

struct TrainResult {
  NetModel model;
  std::vector<double> epoch_loss;
};

struct Ensemble {
  std::vector<NetModel> members;
  StandardizationParams standardizer;
};

inline constexpr std::size_t default_ensemble_size = 5;

// ------------------------------------------------------------------ layout

namespace nn {

struct Layer {
  bool conv = false;
  bool relu = true;
  // dense: in_len = out_len = 1, channels carry the feature count.
  std::size_t in_len = 1, in_ch = 0, out_len = 1, out_ch = 0;
  std::size_t kernel = 1, stride = 1;
  std::size_t w_off = 0, b_off = 0;

  std::size_t in_size() const { return in_len * in_ch; }
  std::size_t out_size() const { return out_len * out_ch; }
  std::size_t fan_in() const { return conv ? kernel * in_ch : in_ch; }
  std::size_t n_weights() const { return out_ch * fan_in(); }
};

struct Layout {
  std::vector<Layer> layers;
  std::size_t n_params = 0;
  std::size_t input_size() const { return layers.front().in_size(); }
  std::size_t n_outputs() const { return layers.back().out_ch; }
};

inline std::size_t conv_output_length(std::size_t in_len, std::size_t kernel,
                                      std::size_t stride) {
  if (kernel == 0 || stride == 0 || kernel > in_len)
    return 0;
  return (in_len - kernel) / stride + 1;
}

class LayoutBuilder {
public:
  LayoutBuilder(std::size_t len, std::size_t ch) : len_(len), ch_(ch) {}

  LayoutBuilder &conv(std::size_t out_ch, std::size_t kernel,
                      std::size_t stride) {
    Layer l;
    l.conv = true;
    l.in_len = len_;
    l.in_ch = ch_;
    l.kernel = kernel;
    l.stride = stride;
    l.out_len = conv_output_length(len_, kernel, stride);
    l.out_ch = out_ch;
    if (l.out_len == 0 || out_ch == 0)
      throw ConfigError("conv layer (kernel " + std::to_string(kernel) +
                        ", stride " + std::to_string(stride) +
                        ") does not fit input length " + std::to_string(len_));
    push(l);
    return *this;
  }

  LayoutBuilder &dense(std::size_t out, bool relu = true) {
    if (out == 0)
      throw ConfigError("dense layer width must be >= 1");
    Layer l;
    l.relu = relu;
    l.in_ch = len_ * ch_;
    l.out_ch = out;
    push(l);
    return *this;
  }

  Layout build() {
    if (layout_.layers.empty())
      throw ConfigError("network has no layers");
    layout_.layers.back().relu = false;
    return layout_;
  }

private:
  void push(Layer l) {
    l.w_off = layout_.n_params;
    l.b_off = l.w_off + l.n_weights();
    layout_.n_params = l.b_off + l.out_ch;
    len_ = l.out_len;
    ch_ = l.out_ch;
    layout_.layers.push_back(l);
  }

  std::size_t len_, ch_;
  Layout layout_;
};

/// Per-sample activation buffers, reused across a batch.
struct Workspace {
  std::vector<std::vector<double>> acts;   // acts[0] input, acts[l+1] output
  std::vector<std::vector<double>> deltas; // dLoss/d(pre-activation output)
  std::vector<double> probs;

  explicit Workspace(const Layout &L) {
    acts.resize(L.layers.size() + 1);
    deltas.resize(L.layers.size() + 1);
    acts[0].resize(L.input_size());
    deltas[0].resize(L.input_size());
    for (std::size_t i = 0; i < L.layers.size(); ++i) {
      acts[i + 1].resize(L.layers[i].out_size());
      deltas[i + 1].resize(L.layers[i].out_size());
    }
    probs.resize(L.n_outputs());
  }
};

inline void layer_forward(const Layer &l, const double *theta,
                          const std::vector<double> &in,
                          std::vector<double> &out) {
  const double *W = theta + l.w_off;
  const double *b = theta + l.b_off;
  if (!l.conv) {
    const std::size_t n = l.in_ch;
    for (std::size_t o = 0; o < l.out_ch; ++o) {
      const double *w = W + o * n;
      double s = b[o];
      for (std::size_t i = 0; i < n; ++i)
        s += w[i] * in[i];
      out[o] = s;
    }
  } else {
    const std::size_t span = l.kernel * l.in_ch;
    for (std::size_t t = 0; t < l.out_len; ++t) {
      const double *x = in.data() + t * l.stride * l.in_ch;
      for (std::size_t d = 0; d < l.out_ch; ++d) {
        const double *w = W + d * span;
        double s = b[d];
        for (std::size_t i = 0; i < span; ++i)
          s += w[i] * x[i];
        out[t * l.out_ch + d] = s;
      }
    }
  }
  if (l.relu)
    for (auto &v : out)
      v = v > 0 ? v : 0.0;
}

/// Accumulates parameter gradients into `grad` and writes dLoss/dInput into
/// `din` when `din` is non-null. `dout` is the gradient w.r.t. the layer's
/// pre-activation output.
inline void layer_backward(const Layer &l, const double *theta,
                           const std::vector<double> &in,
                           const std::vector<double> &dout, double *grad,
                           std::vector<double> *din) {
  const double *W = theta + l.w_off;
  double *gW = grad + l.w_off;
  double *gb = grad + l.b_off;
  if (din)
    std::fill(din->begin(), din->end(), 0.0);
  if (!l.conv) {
    const std::size_t n = l.in_ch;
    for (std::size_t o = 0; o < l.out_ch; ++o) {
      const double d = dout[o];
      if (d == 0.0)
        continue;
      gb[o] += d;
      double *gw = gW + o * n;
      for (std::size_t i = 0; i < n; ++i)
        gw[i] += d * in[i];
      if (din) {
        const double *w = W + o * n;
        double *dx = din->data();
        for (std::size_t i = 0; i < n; ++i)
          dx[i] += d * w[i];
      }
    }
  } else {
    const std::size_t span = l.kernel * l.in_ch;
    for (std::size_t t = 0; t < l.out_len; ++t) {
      const std::size_t base = t * l.stride * l.in_ch;
      const double *x = in.data() + base;
      for (std::size_t dch = 0; dch < l.out_ch; ++dch) {
        const double d = dout[t * l.out_ch + dch];
        if (d == 0.0)
          continue;
        gb[dch] += d;
        double *gw = gW + dch * span;
        for (std::size_t i = 0; i < span; ++i)
          gw[i] += d * x[i];
        if (din) {
          const double *w = W + dch * span;
          double *dx = din->data() + base;
          for (std::size_t i = 0; i < span; ++i)
            dx[i] += d * w[i];
        }
      }
    }
  }
}

/// Runs the network on one flattened input; softmax lands in ws.probs.
inline void forward_one(const Layout &L, std::span<const double> theta,
                        std::span<const double> x, Workspace &ws) {
  std::copy(x.begin(), x.end(), ws.acts[0].begin());
  for (std::size_t i = 0; i < L.layers.size(); ++i)
    layer_forward(L.layers[i], theta.data(), ws.acts[i], ws.acts[i + 1]);
  const auto &z = ws.acts.back();
  const double m = *std::max_element(z.begin(), z.end());
  double sum = 0;
  for (std::size_t c = 0; c < z.size(); ++c) {
    ws.probs[c] = std::exp(z[c] - m);
    sum += ws.probs[c];
  }
  for (auto &p : ws.probs)
    p /= sum;
}

/// Forward + backward for one labelled input. Adds d(-log p_label)/dtheta,
/// scaled by `weight`, into `grad` and returns -log p_label.
inline double sample_gradient(const Layout &L, std::span<const double> theta,
                              std::span<const double> x, std::size_t label,
                              double weight, Workspace &ws,
                              std::span<double> grad) {
  forward_one(L, theta, x, ws);
  const auto &z = ws.acts.back();
  const double m = *std::max_element(z.begin(), z.end());
  double lse = 0;
  for (double v : z)
    lse += std::exp(v - m);
  const double nll = std::log(lse) + m - z[label];

  auto &top = ws.deltas.back();
  for (std::size_t c = 0; c < top.size(); ++c)
    top[c] = weight * (ws.probs[c] - (c == label ? 1.0 : 0.0));
  for (std::size_t i = L.layers.size(); i-- > 0;) {
    const auto &l = L.layers[i];
    if (l.relu) {
      auto &d = ws.deltas[i + 1];
      const auto &a = ws.acts[i + 1];
      for (std::size_t j = 0; j < d.size(); ++j)
        if (a[j] <= 0)
          d[j] = 0.0;
    }
    layer_backward(l, theta.data(), ws.acts[i], ws.deltas[i + 1], grad.data(),
                   i > 0 ? &ws.deltas[i] : nullptr);
  }
  return nll;
}

/// Mean cross-entropy over the batch and its exact gradient.
inline double batch_loss_and_gradient(const Layout &L,
                                      std::span<const double> theta,
                                      std::span<const WindowedSample> batch,
                                      std::span<const std::size_t> index,
                                      std::span<const int> labels,
                                      Workspace &ws, std::span<double> grad) {
  std::fill(grad.begin(), grad.end(), 0.0);
  const double w = 1.0 / static_cast<double>(index.size());
  double loss = 0;
  for (std::size_t i : index)
    loss += sample_gradient(L, theta, batch[i].features,
                            static_cast<std::size_t>(labels[i]), w, ws, grad);
  return loss * w;
}

} // namespace nn

// -------------------------------------------------------------------- spec

inline nn::Layout make_layout(const NetSpec &spec) {
  if (spec.window < 1 || spec.channels < 1)
    throw ConfigError("input shape must be at least 1 x 1");
  if (spec.n_classes < 2)
    throw ConfigError("n_classes must be >= 2");
  if (spec.hidden.size() != 2)
    throw ConfigError("hidden must list exactly 2 layer widths");
  nn::LayoutBuilder b(spec.window, spec.channels);
  if (spec.kind == NetKind::conv) {
    if (spec.conv.size() != 2)
      throw ConfigError("conv net needs exactly 2 conv layers");
    for (const auto &c : spec.conv)
      b.conv(c.out_channels, c.kernel, c.stride);
  }
  b.dense(spec.hidden[0]).dense(spec.hidden[1]).dense(spec.n_classes, false);
  return b.build();
}

inline std::size_t parameter_count(const NetSpec &spec) {
  return make_layout(spec).n_params;
}

namespace detail {

inline void init_layer(const nn::Layer &l, std::span<double> theta, Rng &rng) {
  const double bound = std::sqrt(6.0 / static_cast<double>(l.fan_in()));
  std::uniform_real_distribution<double> dist(-bound, bound);
  for (std::size_t i = 0; i < l.n_weights(); ++i)
    theta[l.w_off + i] = dist(rng);
  for (std::size_t i = 0; i < l.out_ch; ++i)
    theta[l.b_off + i] = 0.0;
}

inline void check_batch(const nn::Layout &L,
                        std::span<const WindowedSample> batch) {
  for (const auto &s : batch)
    if (s.size() != L.input_size())
      throw DataError("sample with " + std::to_string(s.size()) +
                      " features does not match network input size " +
                      std::to_string(L.input_size()));
}

} // namespace detail

/// He-style uniform init, U(-sqrt(6/fan_in), sqrt(6/fan_in)); zero biases.
inline NetModel init_model(const NetSpec &spec) {
  const auto L = make_layout(spec);
  NetModel m{spec, std::vector<double>(L.n_params, 0.0)};
  Rng rng(spec.seed);
  for (const auto &l : L.layers)
    detail::init_layer(l, m.params, rng);
  return m;
}

/// Grows the output layer to `n_classes`, keeping every existing parameter
/// and initializing the new output rows like init_model. `old_index[j]` is
/// the coordinate of new parameter j in the old vector, or -1 if new.
struct HeadExtension {
  NetModel model;
  std::vector<std::ptrdiff_t> old_index;
};

inline HeadExtension extend_head(const NetModel &model, std::size_t n_classes,
                                 std::uint64_t seed) {
  if (n_classes < model.spec.n_classes)
    throw ConfigError("cannot shrink the output layer");
  const auto oldL = make_layout(model.spec);
  NetSpec spec = model.spec;
  spec.n_classes = n_classes;
  const auto newL = make_layout(spec);
  HeadExtension ext{{spec, std::vector<double>(newL.n_params, 0.0)},
                    std::vector<std::ptrdiff_t>(newL.n_params, -1)};
  const auto &oh = oldL.layers.back();
  const auto &nh = newL.layers.back();
  for (std::size_t j = 0; j < oh.w_off; ++j) {
    ext.model.params[j] = model.params[j];
    ext.old_index[j] = static_cast<std::ptrdiff_t>(j);
  }
  Rng rng(seed);
  const double bound = std::sqrt(6.0 / static_cast<double>(nh.fan_in()));
  std::uniform_real_distribution<double> dist(-bound, bound);
  const std::size_t fan = nh.fan_in();
  for (std::size_t o = 0; o < nh.out_ch; ++o)
    for (std::size_t i = 0; i < fan; ++i) {
      const std::size_t to = nh.w_off + o * fan + i;
      if (o < oh.out_ch) {
        const std::size_t from = oh.w_off + o * fan + i;
        ext.model.params[to] = model.params[from];
        ext.old_index[to] = static_cast<std::ptrdiff_t>(from);
      } else {
        ext.model.params[to] = dist(rng);
      }
    }
  for (std::size_t o = 0; o < oh.out_ch; ++o) {
    ext.model.params[nh.b_off + o] = model.params[oh.b_off + o];
    ext.old_index[nh.b_off + o] = static_cast<std::ptrdiff_t>(oh.b_off + o);
  }
  return ext;
}

/// Re-indexes a penalty onto an extended parameter vector; new coordinates
/// get zero Fisher weight.
inline EWCPenalty remap_penalty(const EWCPenalty &p,
                                std::span<const std::ptrdiff_t> old_index) {
  EWCPenalty out{p.lambda, std::vector<double>(old_index.size(), 0.0),
                 std::vector<double>(old_index.size(), 0.0)};
  for (std::size_t j = 0; j < old_index.size(); ++j)
    if (old_index[j] >= 0) {
      out.theta_star[j] = p.theta_star[static_cast<std::size_t>(old_index[j])];
      out.fisher[j] = p.fisher[static_cast<std::size_t>(old_index[j])];
    }
  return out;
}

// ---------------------------------------------------------------- forward

/// B x n_classes softmax probabilities, row-major.
inline std::vector<double> forward(const NetModel &model,
                                   std::span<const WindowedSample> batch) {
  const auto L = make_layout(model.spec);
  if (model.params.size() != L.n_params)
    throw DataError("parameter vector does not match network spec");
  detail::check_batch(L, batch);
  nn::Workspace ws(L);
  const std::size_t K = L.n_outputs();
  std::vector<double> out(batch.size() * K);
  for (std::size_t b = 0; b < batch.size(); ++b) {
    nn::forward_one(L, model.params, batch[b].features, ws);
    std::copy(ws.probs.begin(), ws.probs.end(),
              out.begin() + static_cast<std::ptrdiff_t>(b * K));
  }
  return out;
}

// ---------------------------------------------------------- loss/gradient

struct LossGradient {
  double loss = 0.0;
  std::vector<double> gradient;
};

inline double penalty_value(const EWCPenalty &p,
                            std::span<const double> theta) {
  double s = 0;
  for (std::size_t j = 0; j < theta.size(); ++j) {
    const double e = theta[j] - p.theta_star[j];
    s += p.fisher[j] * e * e;
  }
  return 0.5 * p.lambda * s;
}

namespace detail {

inline void check_penalty(const EWCPenalty &p, std::size_t n) {
  if (p.theta_star.size() != n || p.fisher.size() != n)
    throw DataError("EWC penalty length does not match parameter count");
  if (!(p.lambda >= 0))
    throw ConfigError("EWC lambda must be >= 0");
}

inline void check_labels(std::span<const int> labels, std::size_t n_classes,
                         std::size_t batch) {
  if (labels.size() != batch)
    throw DataError("label count does not match batch size");
  for (int y : labels)
    if (y < 0 || static_cast<std::size_t>(y) >= n_classes)
      throw DataError("label " + std::to_string(y) + " out of range [0, " +
                      std::to_string(n_classes) + ")");
}

inline std::vector<int> labels_of(std::span<const WindowedSample> s) {
  std::vector<int> y(s.size());
  for (std::size_t i = 0; i < s.size(); ++i)
    y[i] = s[i].class_id;
  return y;
}

} // namespace detail

/// Mean cross-entropy (plus the EWC term when given) and its exact gradient.
inline LossGradient loss_and_gradient(const NetModel &model,
                                      std::span<const WindowedSample> batch,
                                      std::span<const int> labels,
                                      const EWCPenalty *penalty = nullptr) {
  const auto L = make_layout(model.spec);
  if (batch.empty())
    throw DataError("empty batch");
  detail::check_batch(L, batch);
  detail::check_labels(labels, model.spec.n_classes, batch.size());
  LossGradient out{0.0, std::vector<double>(L.n_params, 0.0)};
  nn::Workspace ws(L);
  std::vector<std::size_t> idx(batch.size());
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  out.loss = nn::batch_loss_and_gradient(L, model.params, batch, idx, labels,
                                         ws, out.gradient);
  if (penalty) {
    detail::check_penalty(*penalty, L.n_params);
    out.loss += penalty_value(*penalty, model.params);
    for (std::size_t j = 0; j < L.n_params; ++j)
      out.gradient[j] += penalty->lambda * penalty->fisher[j] *
                         (model.params[j] - penalty->theta_star[j]);
  }
  return out;
}

// ------------------------------------------------------------------- train

/// Minibatch SGD (optionally with heavy-ball momentum) on mean cross-entropy.
/// Labels are the samples' class_id. An EWC penalty is applied as an exact
/// proximal step after each gradient step,
///   theta <- (theta + lr*lambda*F*theta*) / (1 + lr*lambda*F),
/// which stays stable however large lambda*F is.
inline TrainResult train(const NetModel &model,
                         std::span<const WindowedSample> data,
                         const TrainConfig &cfg,
                         const EWCPenalty *penalty = nullptr) {
  if (data.empty())
    throw DataError("cannot train on an empty data set");
  if (cfg.epochs < 1 || cfg.batch_size < 1)
    throw ConfigError("epochs and batch_size must be >= 1");
  if (!(cfg.learning_rate >= 0) || !std::isfinite(cfg.learning_rate))
    throw ConfigError("learning_rate must be finite and >= 0");
  const auto L = make_layout(model.spec);
  if (model.params.size() != L.n_params)
    throw DataError("parameter vector does not match network spec");
  detail::check_batch(L, data);
  const auto labels = detail::labels_of(data);
  detail::check_labels(labels, model.spec.n_classes, data.size());
  if (penalty)
    detail::check_penalty(*penalty, L.n_params);

  TrainResult res{model, {}};
  auto &theta = res.model.params;
  const std::size_t P = L.n_params;
  std::vector<double> grad(P), velocity(P, 0.0), shrink;
  if (penalty) {
    shrink.resize(P);
    for (std::size_t j = 0; j < P; ++j)
      shrink[j] = cfg.learning_rate * penalty->lambda * penalty->fisher[j];
  }
  const bool momentum = cfg.optimizer == OptimizerKind::sgd_momentum;
  nn::Workspace ws(L);
  Rng rng(cfg.shuffle_seed);
  std::vector<std::size_t> order(data.size());
  std::iota(order.begin(), order.end(), std::size_t{0});

  for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    double epoch_loss = 0;
    std::size_t n_batches = 0;
    for (std::size_t start = 0; start < order.size(); start += cfg.batch_size) {
      const std::size_t end = std::min(order.size(), start + cfg.batch_size);
      std::span<const std::size_t> idx(order.data() + start, end - start);
      double loss = nn::batch_loss_and_gradient(L, theta, data, idx, labels,
                                                ws, grad);
      if (penalty)
        loss += penalty_value(*penalty, theta);
      if (!std::isfinite(loss))
        throw TrainingError("non-finite loss at epoch " +
                            std::to_string(epoch + 1) + ", batch " +
                            std::to_string(n_batches + 1));
      for (std::size_t j = 0; j < P; ++j) {
        double step = grad[j];
        if (momentum) {
          velocity[j] = cfg.momentum * velocity[j] + grad[j];
          step = velocity[j];
        }
        theta[j] -= cfg.learning_rate * step;
      }
      if (penalty)
        for (std::size_t j = 0; j < P; ++j)
          if (shrink[j] != 0.0)
            theta[j] = (theta[j] + shrink[j] * penalty->theta_star[j]) /
                       (1.0 + shrink[j]);
      epoch_loss += loss;
      ++n_batches;
    }
    res.epoch_loss.push_back(epoch_loss / static_cast<double>(n_batches));
  }
  for (double v : theta)
    if (!std::isfinite(v))
      throw TrainingError("non-finite parameter after training");
  return res;
}

// ------------------------------------------------------------------ fisher

/// Empirical Fisher diagonal: mean over samples of the squared gradient of
/// log p(true label | x). Labels are the samples' class_id.
inline std::vector<double> fisher_diagonal(const NetModel &model,
                                           std::span<const WindowedSample> data) {
  if (data.empty())
    throw DataError("cannot estimate Fisher information on empty data");
  const auto L = make_layout(model.spec);
  detail::check_batch(L, data);
  const auto labels = detail::labels_of(data);
  detail::check_labels(labels, model.spec.n_classes, data.size());
  nn::Workspace ws(L);
  std::vector<double> F(L.n_params, 0.0), g(L.n_params);
  for (std::size_t i = 0; i < data.size(); ++i) {
    std::fill(g.begin(), g.end(), 0.0);
    nn::sample_gradient(L, model.params, data[i].features,
                        static_cast<std::size_t>(labels[i]), 1.0, ws, g);
    for (std::size_t j = 0; j < g.size(); ++j)
      F[j] += g[j] * g[j];
  }
  const double n = static_cast<double>(data.size());
  for (auto &f : F) {
    f /= n;
    if (!std::isfinite(f))
      throw TrainingError("non-finite gradient while estimating Fisher");
  }
  return F;
}

// ---------------------------------------------------------------- ensemble

/// Member m is initialized from derive_seed(seed, "member/<m>/init") and
/// shuffled with derive_seed(seed, "member/<m>/shuffle").
inline std::uint64_t member_init_seed(std::uint64_t seed, std::size_t m) {
  return derive_seed(seed, "member/" + std::to_string(m) + "/init");
}
inline std::uint64_t member_shuffle_seed(std::uint64_t seed, std::size_t m) {
  return derive_seed(seed, "member/" + std::to_string(m) + "/shuffle");
}

/// Fits the standardizer on `data`, then trains `size` independently seeded
/// members of `spec` on the standardized set.
inline Ensemble fit_ensemble(NetSpec spec, std::span<const WindowedSample> data,
                             TrainConfig cfg, std::size_t size,
                             std::uint64_t seed) {
  if (size < 1)
    throw ConfigError("ensemble size must be >= 1");
  Ensemble e;
  e.standardizer = fit_standardizer(data);
  const auto z = apply_standardizer(e.standardizer, data);
  for (std::size_t m = 0; m < size; ++m) {
    spec.seed = member_init_seed(seed, m);
    cfg.shuffle_seed = member_shuffle_seed(seed, m);
    e.members.push_back(train(init_model(spec), z, cfg).model);
  }
  return e;
}

/// Averaged member softmax rows for the (raw, unstandardized) batch.
inline std::vector<double> predict_proba(const Ensemble &e,
                                         std::span<const WindowedSample> batch) {
  if (e.members.empty())
    throw DataError("ensemble has no members");
  const auto z = apply_standardizer(e.standardizer, batch);
  const std::size_t K = e.members.front().spec.n_classes;
  std::vector<double> avg(batch.size() * K, 0.0);
  for (const auto &m : e.members) {
    if (m.spec.n_classes != K)
      throw DataError("ensemble members disagree on n_classes");
    const auto p = forward(m, z);
    for (std::size_t i = 0; i < avg.size(); ++i)
      avg[i] += p[i];
  }
  for (auto &v : avg)
    v /= static_cast<double>(e.members.size());
  return avg;
}

/// Row-wise argmax; ties go to the lower class index.
inline std::vector<int> argmax_rows(std::span<const double> probs,
                                    std::size_t n_classes) {
  std::vector<int> out(probs.size() / n_classes);
  for (std::size_t r = 0; r < out.size(); ++r) {
    const double *row = probs.data() + r * n_classes;
    out[r] = static_cast<int>(std::max_element(row, row + n_classes) - row);
  }
  return out;
}

inline std::vector<int> predict(const Ensemble &e,
                                std::span<const WindowedSample> batch) {
  return argmax_rows(predict_proba(e, batch),
                     e.members.front().spec.n_classes);
}

inline std::vector<int> predict_member(const Ensemble &e, std::size_t m,
                                       std::span<const WindowedSample> batch) {
  const auto &model = e.members.at(m);
  return argmax_rows(forward(model, apply_standardizer(e.standardizer, batch)),
                     model.spec.n_classes);
}

// -------------------------------------------------------------------- JSON

NLOHMANN_JSON_SERIALIZE_ENUM(NetKind, {{NetKind::dense, "dense"},
                                       {NetKind::conv, "conv"}})
NLOHMANN_JSON_SERIALIZE_ENUM(Activation, {{Activation::relu, "relu"}})
NLOHMANN_JSON_SERIALIZE_ENUM(OptimizerKind,
                             {{OptimizerKind::sgd, "sgd"},
                              {OptimizerKind::sgd_momentum, "sgd_momentum"}})

inline void to_json(nlohmann::json &j, const ConvLayerSpec &c) {
  j = {{"out_channels", c.out_channels},
       {"kernel", c.kernel},
       {"stride", c.stride}};
}

inline void from_json(const nlohmann::json &j, ConvLayerSpec &c) {
  c.out_channels = j.at("out_channels").get<std::size_t>();
  c.kernel = j.at("kernel").get<std::size_t>();
  c.stride = j.value("stride", std::size_t{1});
}

inline void to_json(nlohmann::json &j, const NetSpec &s) {
  j = {{"kind", s.kind},
       {"input_shape", {s.window, s.channels}},
       {"n_classes", s.n_classes},
       {"hidden", s.hidden},
       {"activation", s.activation},
       {"seed", s.seed}};
  if (s.kind == NetKind::conv)
    j["conv"] = s.conv;
}

/// Architecture fields only are required; input_shape, n_classes and seed
/// default to the struct defaults when absent (they are filled per task).
inline void from_json(const nlohmann::json &j, NetSpec &s) {
  s = NetSpec{};
  const auto kind = j.at("kind").get<std::string>();
  if (kind != "dense" && kind != "conv")
    throw ConfigError("net kind must be \"dense\" or \"conv\", got \"" + kind +
                      "\"");
  s.kind = kind == "dense" ? NetKind::dense : NetKind::conv;
  if (j.contains("input_shape")) {
    const auto shape = j.at("input_shape").get<std::vector<std::size_t>>();
    if (shape.size() != 2)
      throw ConfigError("input_shape must be [window, channels]");
    s.window = shape[0];
    s.channels = shape[1];
  }
  s.n_classes = j.value("n_classes", s.n_classes);
  if (j.contains("hidden"))
    j.at("hidden").get_to(s.hidden);
  if (j.contains("conv"))
    j.at("conv").get_to(s.conv);
  if (j.contains("activation") && j.at("activation") != "relu")
    throw ConfigError("only relu activation is supported");
  s.seed = j.value("seed", s.seed);
}

inline void to_json(nlohmann::json &j, const TrainConfig &c) {
  j = {{"epochs", c.epochs},
       {"batch_size", c.batch_size},
       {"learning_rate", c.learning_rate},
       {"optimizer", c.optimizer},
       {"momentum", c.momentum},
       {"shuffle_seed", c.shuffle_seed}};
}

inline void from_json(const nlohmann::json &j, TrainConfig &c) {
  c = TrainConfig{};
  c.epochs = j.value("epochs", c.epochs);
  c.batch_size = j.value("batch_size", c.batch_size);
  c.learning_rate = j.value("learning_rate", c.learning_rate);
  if (j.contains("optimizer")) {
    const auto o = j.at("optimizer").get<std::string>();
    if (o != "sgd" && o != "sgd_momentum")
      throw ConfigError("optimizer must be \"sgd\" or \"sgd_momentum\"");
    c.optimizer = o == "sgd" ? OptimizerKind::sgd : OptimizerKind::sgd_momentum;
  }
  c.momentum = j.value("momentum", c.momentum);
  c.shuffle_seed = j.value("shuffle_seed", c.shuffle_seed);
  if (c.epochs < 1)
    throw ConfigError("train.epochs must be >= 1");
  if (c.batch_size < 1)
    throw ConfigError("train.batch_size must be >= 1");
  if (!(c.learning_rate > 0))
    throw ConfigError("train.learning_rate must be > 0");
}

/// Checkpoint: JSON header plus the flat parameter vector.
inline nlohmann::json model_checkpoint(const NetModel &m,
                                       const StandardizationParams *std_params =
                                           nullptr) {
  nlohmann::json j = {{"spec", m.spec},
                      {"parameter_count", m.params.size()},
                      {"parameters", m.params}};
  if (std_params)
    j["standardizer"] = *std_params;
  return j;
}

inline NetModel load_model_checkpoint(const nlohmann::json &j) {
  NetModel m;
  try {
    m.spec = j.at("spec").get<NetSpec>();
    j.at("parameters").get_to(m.params);
  } catch (const nlohmann::json::exception &e) {
    throw ParseError(std::string("model checkpoint: ") + e.what(), 0);
  }
  const auto expected = parameter_count(m.spec);
  if (m.params.size() != expected)
    throw ParseError("checkpoint holds " + std::to_string(m.params.size()) +
                         " parameters, spec requires " +
                         std::to_string(expected),
                     0);
  for (double v : m.params)
    if (!std::isfinite(v))
      throw ParseError("checkpoint holds a non-finite parameter", 0);
  return m;
}

inline nlohmann::json ensemble_checkpoint(const Ensemble &e) {
  nlohmann::json members = nlohmann::json::array();
  for (const auto &m : e.members)
    members.push_back(model_checkpoint(m));
  return {{"standardizer", e.standardizer}, {"members", members}};
}

inline Ensemble load_ensemble_checkpoint(const nlohmann::json &j) {
  Ensemble e;
  try {
    e.standardizer = j.at("standardizer").get<StandardizationParams>();
    for (const auto &m : j.at("members"))
      e.members.push_back(load_model_checkpoint(m));
  } catch (const nlohmann::json::exception &ex) {
    throw ParseError(std::string("ensemble checkpoint: ") + ex.what(), 0);
  }
  if (e.members.empty())
    throw ParseError("ensemble checkpoint has no members", 0);
  for (const auto &m : e.members)
    if (m.spec.n_classes != e.members.front().spec.n_classes ||
        m.spec.window * m.spec.channels != e.standardizer.mean.size())
      throw ParseError("ensemble members are inconsistent", 0);
  return e;
}

} // namespace rcl
