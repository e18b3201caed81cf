#pragma once

// Reference computations used only by tests. Each one recomputes a quantity
// from its definition without going through the library code it checks.

#include <algorithm>
#include <cmath>
#include <functional>
#include <map>
#include <random>
#include <utility>
#include <vector>

#include "rcl/classifier.hpp"
#include "rcl/data.hpp"
#include "rcl/eval.hpp"

namespace oracle {

/// Exhaustive scan: true Euclidean distances, fully sorted, ties by index.
inline std::vector<std::size_t>
neighbors(const std::vector<std::vector<double>> &memory, std::size_t query,
          std::size_t k) {
  std::vector<std::pair<double, std::size_t>> all;
  for (std::size_t j = 0; j < memory.size(); ++j) {
    if (j == query)
      continue;
    double s = 0;
    for (std::size_t f = 0; f < memory[j].size(); ++f)
      s += std::pow(memory[j][f] - memory[query][f], 2);
    all.emplace_back(std::sqrt(s), j);
  }
  std::sort(all.begin(), all.end());
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < std::min(k, all.size()); ++i)
    out.push_back(all[i].second);
  return out;
}

/// Solves s = a + u (b - a) component-wise. Returns u if every component
/// agrees within `tol` and u is in [0, 1] (within tol), else -1.
inline double segment_parameter(const std::vector<double> &s,
                                const std::vector<double> &a,
                                const std::vector<double> &b, double tol) {
  double u = -1;
  double span = 0;
  for (std::size_t f = 0; f < s.size(); ++f)
    span = std::max(span, std::abs(b[f] - a[f]));
  if (span == 0) {
    for (std::size_t f = 0; f < s.size(); ++f)
      if (std::abs(s[f] - a[f]) > tol)
        return -1;
    return 0;
  }
  // Use the widest component to solve for u, then check the rest.
  std::size_t best = 0;
  for (std::size_t f = 0; f < s.size(); ++f)
    if (std::abs(b[f] - a[f]) > std::abs(b[best] - a[best]))
      best = f;
  u = (s[best] - a[best]) / (b[best] - a[best]);
  if (u < -tol || u > 1 + tol)
    return -1;
  for (std::size_t f = 0; f < s.size(); ++f)
    if (std::abs(a[f] + u * (b[f] - a[f]) - s[f]) > tol)
      return -1;
  return u;
}

/// Central differences of a scalar function over every coordinate.
inline std::vector<double>
finite_difference(const std::function<double(const std::vector<double> &)> &f,
                  std::vector<double> x, double h = 1e-5) {
  std::vector<double> g(x.size());
  for (std::size_t j = 0; j < x.size(); ++j) {
    const double keep = x[j];
    x[j] = keep + h;
    const double up = f(x);
    x[j] = keep - h;
    const double down = f(x);
    x[j] = keep;
    g[j] = (up - down) / (2 * h);
  }
  return g;
}

/// Mean cross-entropy of a model on a batch, computed from forward() alone.
inline double mean_nll(const rcl::NetModel &m,
                       const std::vector<rcl::WindowedSample> &batch,
                       const std::vector<int> &labels) {
  const auto p = rcl::forward(m, batch);
  const std::size_t K = m.spec.n_classes;
  double s = 0;
  for (std::size_t i = 0; i < batch.size(); ++i)
    s -= std::log(p[i * K + static_cast<std::size_t>(labels[i])]);
  return s / static_cast<double>(batch.size());
}

/// max_j |a_j - b_j| / max(|a_j|, |b_j|, floor)
inline double max_relative_error(const std::vector<double> &a,
                                 const std::vector<double> &b,
                                 double floor = 1e-6) {
  double worst = 0;
  for (std::size_t j = 0; j < a.size(); ++j) {
    const double den = std::max({std::abs(a[j]), std::abs(b[j]), floor});
    worst = std::max(worst, std::abs(a[j] - b[j]) / den);
  }
  return worst;
}

/// Confusion counts by tallying (truth, pred) pairs in a map.
inline std::map<std::pair<int, int>, std::size_t>
tally(const std::vector<int> &truth, const std::vector<int> &pred) {
  std::map<std::pair<int, int>, std::size_t> t;
  for (std::size_t i = 0; i < truth.size(); ++i)
    ++t[{truth[i], pred[i]}];
  return t;
}

struct ClassScores {
  std::vector<double> p, r, f;
  double macro_p = 0, macro_r = 0, macro_f = 0;
};

/// Precision/recall/F from TP, FP and FN counts, 0/0 taken as 0.
inline ClassScores scores(const rcl::ConfusionMatrix &cm) {
  ClassScores s;
  const std::size_t n = cm.n_classes;
  for (std::size_t c = 0; c < n; ++c) {
    double tp = 0, fp = 0, fn = 0;
    for (std::size_t t = 0; t < n; ++t)
      for (std::size_t q = 0; q < n; ++q) {
        const double v = static_cast<double>(cm.at(t, q));
        if (t == c && q == c)
          tp += v;
        else if (q == c)
          fp += v;
        else if (t == c)
          fn += v;
      }
    const double p = tp + fp > 0 ? tp / (tp + fp) : 0.0;
    const double r = tp + fn > 0 ? tp / (tp + fn) : 0.0;
    const double f = p + r > 0 ? 2 * p * r / (p + r) : 0.0;
    s.p.push_back(p);
    s.r.push_back(r);
    s.f.push_back(f);
  }
  for (std::size_t c = 0; c < n; ++c) {
    s.macro_p += s.p[c] / static_cast<double>(n);
    s.macro_r += s.r[c] / static_cast<double>(n);
    s.macro_f += s.f[c] / static_cast<double>(n);
  }
  return s;
}

/// Two-pass mean and population standard deviation.
inline std::pair<double, double> moments(const std::vector<double> &x) {
  double m = 0;
  for (double v : x)
    m += v;
  m /= static_cast<double>(x.size());
  double ss = 0;
  for (double v : x)
    ss += (v - m) * (v - m);
  return {m, std::sqrt(ss / static_cast<double>(x.size()))};
}

} // namespace oracle
