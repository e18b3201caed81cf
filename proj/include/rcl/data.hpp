#pragma once

// Trials, windowing, standardization, trial CSV I/O and the synthetic
// vibration-like stream used for desk-scale benchmarks.

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <map>
#include <numbers>
#include <optional>
#include <span>
#include <sstream>
#include <string>
#include <tuple>
#include <vector>

#include <json.hpp>

#include "rcl/common.hpp"

namespace rcl {

/// One multi-channel recording of one class under one trial.
/// `values` is T x C, row-major over (timestep, channel).
struct TimeSeriesTrial {
  int class_id = 0;
  int trial_id = 1;
  std::size_t length = 0;   // T
  std::size_t channels = 0; // C
  std::vector<double> values;
  double sample_rate_hz = 1.0;

  double at(std::size_t t, std::size_t c) const {
    return values[t * channels + c];
  }
};

enum class Origin { raw, synthetic };

/// Where a window came from. Raw windows point back into their trial;
/// synthetic ones name the generator memory row and the neighbor row that
/// bound their interpolation segment.
struct Provenance {
  Origin origin = Origin::raw;
  int trial_id = 0;
  std::size_t start = 0;   // raw: first timestep; synthetic: memory row
  std::ptrdiff_t partner = -1; // synthetic only: neighbor memory row
};

/// A W x C feature window with a class label. Flattened row-major over
/// (timestep, channel); dense and conv classifiers index it the same way.
struct WindowedSample {
  std::size_t window = 0;
  std::size_t channels = 0;
  std::vector<double> features;
  int class_id = 0;
  Provenance source;

  std::size_t size() const { return features.size(); }
};

struct StandardizationParams {
  std::vector<double> mean;
  std::vector<double> std;
};

struct SyntheticClassParams {
  std::vector<double> mean; // one entry per channel
  double amplitude = 1.0;
  double frequency = 0.05;  // cycles per second
  double noise_std = 1.0;
};

struct SyntheticStreamConfig {
  int n_classes = 3;
  int channels = 2;
  int trial_length = 6250;
  int trials_per_class = 5;
  double sample_rate_hz = 1.0;
  std::vector<SyntheticClassParams> classes;
  std::uint64_t seed = 2024;
};

// ---------------------------------------------------------------- windowing

inline std::vector<WindowedSample> window_trial(const TimeSeriesTrial &trial,
                                                std::size_t window,
                                                std::size_t stride) {
  if (window < 1 || stride < 1)
    throw ConfigError("window and stride must be >= 1");
  if (window > trial.length)
    throw DataError("trial (class " + std::to_string(trial.class_id) +
                    ", trial " + std::to_string(trial.trial_id) +
                    ") has " + std::to_string(trial.length) +
                    " steps, shorter than window " + std::to_string(window));
  const std::size_t n = (trial.length - window) / stride + 1;
  const std::size_t C = trial.channels;
  std::vector<WindowedSample> out;
  out.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    WindowedSample s;
    s.window = window;
    s.channels = C;
    s.class_id = trial.class_id;
    s.source = {Origin::raw, trial.trial_id, i * stride, -1};
    auto first = trial.values.begin() +
                 static_cast<std::ptrdiff_t>(i * stride * C);
    s.features.assign(first, first + static_cast<std::ptrdiff_t>(window * C));
    out.push_back(std::move(s));
  }
  return out;
}

// ---------------------------------------------------------- standardization

inline StandardizationParams
fit_standardizer(std::span<const WindowedSample> samples) {
  if (samples.empty())
    throw DataError("cannot fit a standardizer on an empty sample list");
  const std::size_t d = samples.front().size();
  StandardizationParams p{std::vector<double>(d, 0.0),
                          std::vector<double>(d, 0.0)};
  for (const auto &s : samples) {
    if (s.size() != d)
      throw DataError("inconsistent sample shapes in standardizer fit");
    for (std::size_t j = 0; j < d; ++j)
      p.mean[j] += s.features[j];
  }
  const double n = static_cast<double>(samples.size());
  for (auto &m : p.mean)
    m /= n;
  for (const auto &s : samples)
    for (std::size_t j = 0; j < d; ++j) {
      const double e = s.features[j] - p.mean[j];
      p.std[j] += e * e;
    }
  for (auto &v : p.std) {
    v = std::sqrt(v / n);
    if (v < 1e-12)
      v = 1.0;
  }
  return p;
}

inline WindowedSample apply_standardizer(const StandardizationParams &p,
                                         WindowedSample sample) {
  if (sample.size() != p.mean.size())
    throw DataError("sample has " + std::to_string(sample.size()) +
                    " features, standardizer expects " +
                    std::to_string(p.mean.size()));
  for (std::size_t j = 0; j < sample.size(); ++j)
    sample.features[j] = (sample.features[j] - p.mean[j]) / p.std[j];
  return sample;
}

inline std::vector<WindowedSample>
apply_standardizer(const StandardizationParams &p,
                   std::span<const WindowedSample> samples) {
  std::vector<WindowedSample> out;
  out.reserve(samples.size());
  for (const auto &s : samples)
    out.push_back(apply_standardizer(p, s));
  return out;
}

inline WindowedSample invert_standardizer(const StandardizationParams &p,
                                          WindowedSample sample) {
  if (sample.size() != p.mean.size())
    throw DataError("shape mismatch in inverse standardization");
  for (std::size_t j = 0; j < sample.size(); ++j)
    sample.features[j] = sample.features[j] * p.std[j] + p.mean[j];
  return sample;
}

// ------------------------------------------------------------------ CSV I/O

/// One problem found while scanning a trial CSV.
struct CsvViolation {
  std::size_t row; // 1-based file line
  std::string message;
};

struct CsvScan {
  std::vector<TimeSeriesTrial> trials;
  std::vector<CsvViolation> violations;
};

namespace detail {

inline std::vector<std::string_view> split_commas(std::string_view line) {
  std::vector<std::string_view> out;
  std::size_t pos = 0;
  while (true) {
    auto next = line.find(',', pos);
    out.push_back(line.substr(pos, next == std::string_view::npos
                                       ? std::string_view::npos
                                       : next - pos));
    if (next == std::string_view::npos)
      break;
    pos = next + 1;
  }
  return out;
}

inline std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t'))
    s.remove_prefix(1);
  while (!s.empty() &&
         (s.back() == ' ' || s.back() == '\t' || s.back() == '\r'))
    s.remove_suffix(1);
  return s;
}

template <class T> bool parse_number(std::string_view s, T &out) {
  s = trim(s);
  if (!s.empty() && s.front() == '+')
    s.remove_prefix(1);
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), out);
  return ec == std::errc() && ptr == s.data() + s.size() && !s.empty();
}

} // namespace detail

/// Parses a trial CSV and collects every schema violation instead of stopping
/// at the first one. Trials are returned only for well-formed groups.
inline CsvScan scan_trials_csv(std::istream &in) {
  CsvScan scan;
  std::string line;
  if (!std::getline(in, line)) {
    scan.violations.push_back({1, "empty file, missing header"});
    return scan;
  }
  auto header = detail::split_commas(detail::trim(line));
  const char *expected[] = {"class_id", "trial_id", "step"};
  bool header_ok = header.size() >= 4;
  for (std::size_t i = 0; header_ok && i < 3; ++i)
    header_ok = detail::trim(header[i]) == expected[i];
  for (std::size_t i = 3; header_ok && i < header.size(); ++i)
    header_ok = detail::trim(header[i]) == "ch" + std::to_string(i - 2);
  if (!header_ok) {
    scan.violations.push_back(
        {1, "header must be class_id,trial_id,step,ch1,...,chC"});
    return scan;
  }
  const std::size_t C = header.size() - 3;

  std::map<std::pair<int, int>, std::size_t> index;
  std::vector<bool> broken;
  std::optional<std::tuple<int, int, long long>> prev;
  bool reported_unsorted = false;
  std::size_t row = 1;
  while (std::getline(in, line)) {
    ++row;
    auto body = detail::trim(line);
    if (body.empty())
      continue;
    auto fields = detail::split_commas(body);
    if (fields.size() != C + 3) {
      scan.violations.push_back(
          {row, "expected " + std::to_string(C + 3) + " columns, found " +
                    std::to_string(fields.size())});
      continue;
    }
    int cls = 0, trial = 0;
    long long step = 0;
    if (!detail::parse_number(fields[0], cls) ||
        !detail::parse_number(fields[1], trial) ||
        !detail::parse_number(fields[2], step)) {
      scan.violations.push_back({row, "class_id, trial_id and step must be "
                                      "integers"});
      continue;
    }
    std::vector<double> vals(C);
    bool ok = true;
    for (std::size_t c = 0; c < C; ++c) {
      double v = 0;
      auto field = detail::trim(fields[c + 3]);
      if (!detail::parse_number(field, v) || !std::isfinite(v)) {
        scan.violations.push_back(
            {row, "non-finite or malformed value in column ch" +
                      std::to_string(c + 1) + ": '" + std::string(field) +
                      "'"});
        ok = false;
        break;
      }
      vals[c] = v;
    }
    if (!ok)
      continue;
    auto key = std::make_tuple(cls, trial, step);
    if (prev && !(*prev < key) && !reported_unsorted) {
      scan.violations.push_back(
          {row, "rows not sorted by (class_id, trial_id, step): (" +
                    std::to_string(cls) + "," + std::to_string(trial) + "," +
                    std::to_string(step) + ") follows (" +
                    std::to_string(std::get<0>(*prev)) + "," +
                    std::to_string(std::get<1>(*prev)) + "," +
                    std::to_string(std::get<2>(*prev)) + ")"});
      reported_unsorted = true;
    }
    prev = key;
    if (trial < 1) {
      scan.violations.push_back({row, "trial_id must be >= 1"});
      continue;
    }
    auto [it, fresh] = index.try_emplace({cls, trial}, scan.trials.size());
    if (fresh) {
      TimeSeriesTrial t;
      t.class_id = cls;
      t.trial_id = trial;
      t.channels = C;
      scan.trials.push_back(std::move(t));
    }
    auto &t = scan.trials[it->second];
    t.values.insert(t.values.end(), vals.begin(), vals.end());
    ++t.length;
  }
  if (scan.trials.empty() && scan.violations.empty())
    scan.violations.push_back({row, "file contains no data rows"});
  return scan;
}

/// Reads the trial CSV; throws ParseError naming the first offending row.
inline std::vector<TimeSeriesTrial> load_trials(std::istream &in) {
  auto scan = scan_trials_csv(in);
  if (!scan.violations.empty())
    throw ParseError(scan.violations.front().message,
                     scan.violations.front().row);
  return std::move(scan.trials);
}

inline std::vector<TimeSeriesTrial> load_trials(const std::string &path) {
  std::ifstream in(path);
  if (!in)
    throw ParseError("cannot open trial file '" + path + "'", 0);
  return load_trials(in);
}

/// Writes trials sorted by (class_id, trial_id) with shortest round-trip
/// decimal formatting, so load_trials(save_trials(x)) == x bit for bit.
inline void save_trials(std::ostream &out,
                        std::span<const TimeSeriesTrial> trials) {
  if (trials.empty())
    throw DataError("no trials to write");
  const std::size_t C = trials.front().channels;
  std::vector<const TimeSeriesTrial *> order;
  for (const auto &t : trials) {
    if (t.channels != C)
      throw DataError("inconsistent channel counts across trials");
    order.push_back(&t);
  }
  std::stable_sort(order.begin(), order.end(), [](auto *a, auto *b) {
    return std::tie(a->class_id, a->trial_id) <
           std::tie(b->class_id, b->trial_id);
  });
  out << "class_id,trial_id,step";
  for (std::size_t c = 0; c < C; ++c)
    out << ",ch" << c + 1;
  out << '\n';
  char buf[64];
  for (const auto *t : order)
    for (std::size_t s = 0; s < t->length; ++s) {
      out << t->class_id << ',' << t->trial_id << ',' << s;
      for (std::size_t c = 0; c < C; ++c) {
        auto [p, ec] = std::to_chars(buf, buf + sizeof buf, t->at(s, c));
        out << ',' << std::string_view(buf, static_cast<std::size_t>(p - buf));
      }
      out << '\n';
    }
}

// ---------------------------------------------------------- synthetic data

inline SyntheticStreamConfig default_synthetic_config() {
  SyntheticStreamConfig cfg;
  // Class means sit on a line, 3 noise std apart per channel; class 1 lies
  // between the normal class and class 2. Frequencies are incommensurate
  // with the default window so consecutive windows see different phases.
  cfg.classes = {
      {{0.0, 0.0}, 1.0, 0.0137, 1.0},
      {{3.0, 3.0}, 1.5, 0.0291, 1.0},
      {{6.0, 6.0}, 2.0, 0.0419, 1.0},
  };
  return cfg;
}

inline void validate(const SyntheticStreamConfig &cfg) {
  if (cfg.n_classes < 2)
    throw ConfigError("n_classes must be >= 2");
  if (cfg.channels < 1)
    throw ConfigError("channels must be >= 1");
  if (cfg.trial_length < 1)
    throw ConfigError("trial_length must be >= 1");
  if (cfg.trials_per_class < 1)
    throw ConfigError("trials_per_class must be >= 1");
  if (!(cfg.sample_rate_hz > 0) || !std::isfinite(cfg.sample_rate_hz))
    throw ConfigError("sample_rate_hz must be positive");
  if (cfg.classes.size() != static_cast<std::size_t>(cfg.n_classes))
    throw ConfigError("classes must list exactly n_classes entries");
  for (std::size_t c = 0; c < cfg.classes.size(); ++c) {
    const auto &p = cfg.classes[c];
    const std::string where = "classes[" + std::to_string(c) + "]";
    if (p.mean.size() != static_cast<std::size_t>(cfg.channels))
      throw ConfigError(where + ".mean must have one entry per channel");
    for (double m : p.mean)
      if (!std::isfinite(m))
        throw ConfigError(where + ".mean must be finite");
    if (!(p.amplitude >= 0) || !std::isfinite(p.amplitude))
      throw ConfigError(where + ".amplitude must be >= 0");
    if (!(p.frequency >= 0) || !std::isfinite(p.frequency))
      throw ConfigError(where + ".frequency must be >= 0");
    if (!(p.noise_std >= 0) || !std::isfinite(p.noise_std))
      throw ConfigError(where + ".noise_std must be >= 0");
    for (std::size_t o = 0; o < c; ++o) {
      const auto &q = cfg.classes[o];
      if (p.mean == q.mean && p.amplitude == q.amplitude &&
          p.frequency == q.frequency && p.noise_std == q.noise_std)
        throw ConfigError(where + " duplicates classes[" + std::to_string(o) +
                          "]");
    }
  }
}

/// Class c, channel ch: mean[ch] + amplitude * sin(2 pi f t / rate + phase +
/// ch * pi / 2) + N(0, noise_std). The phase is drawn per trial; each
/// (class, trial) pair has its own derived RNG stream.
inline std::vector<TimeSeriesTrial>
synthesize_stream(const SyntheticStreamConfig &cfg) {
  validate(cfg);
  std::vector<TimeSeriesTrial> out;
  const auto C = static_cast<std::size_t>(cfg.channels);
  const auto T = static_cast<std::size_t>(cfg.trial_length);
  for (int c = 0; c < cfg.n_classes; ++c) {
    const auto &p = cfg.classes[static_cast<std::size_t>(c)];
    for (int tr = 1; tr <= cfg.trials_per_class; ++tr) {
      Rng rng(derive_seed(cfg.seed, "synth/class/" + std::to_string(c) +
                                        "/trial/" + std::to_string(tr)));
      std::uniform_real_distribution<double> phase_dist(
          0.0, 2.0 * std::numbers::pi);
      std::normal_distribution<double> noise(0.0, 1.0);
      const double phase = phase_dist(rng);
      TimeSeriesTrial t;
      t.class_id = c;
      t.trial_id = tr;
      t.length = T;
      t.channels = C;
      t.sample_rate_hz = cfg.sample_rate_hz;
      t.values.resize(T * C);
      const double w = 2.0 * std::numbers::pi * p.frequency / cfg.sample_rate_hz;
      for (std::size_t s = 0; s < T; ++s)
        for (std::size_t ch = 0; ch < C; ++ch) {
          double v = p.mean[ch] +
                     p.amplitude * std::sin(w * static_cast<double>(s) + phase +
                                            static_cast<double>(ch) *
                                                std::numbers::pi / 2.0);
          const double z = noise(rng);
          if (p.noise_std > 0)
            v += p.noise_std * z;
          t.values[s * C + ch] = v;
        }
      out.push_back(std::move(t));
    }
  }
  return out;
}

// -------------------------------------------------------------------- JSON

inline void to_json(nlohmann::json &j, const SyntheticClassParams &p) {
  j = {{"mean", p.mean},
       {"amplitude", p.amplitude},
       {"frequency", p.frequency},
       {"noise_std", p.noise_std}};
}

inline void from_json(const nlohmann::json &j, SyntheticClassParams &p) {
  j.at("mean").get_to(p.mean);
  p.amplitude = j.value("amplitude", p.amplitude);
  p.frequency = j.value("frequency", p.frequency);
  p.noise_std = j.value("noise_std", p.noise_std);
}

inline void to_json(nlohmann::json &j, const SyntheticStreamConfig &c) {
  j = {{"n_classes", c.n_classes},
       {"channels", c.channels},
       {"trial_length", c.trial_length},
       {"trials_per_class", c.trials_per_class},
       {"sample_rate_hz", c.sample_rate_hz},
       {"classes", c.classes},
       {"seed", c.seed}};
}

inline void from_json(const nlohmann::json &j, SyntheticStreamConfig &c) {
  c = SyntheticStreamConfig{};
  try {
    c.n_classes = j.at("n_classes").get<int>();
    c.channels = j.at("channels").get<int>();
    c.trial_length = j.at("trial_length").get<int>();
    c.trials_per_class = j.at("trials_per_class").get<int>();
    c.sample_rate_hz = j.value("sample_rate_hz", 1.0);
    j.at("classes").get_to(c.classes);
    c.seed = j.value("seed", c.seed);
  } catch (const nlohmann::json::exception &e) {
    throw ConfigError(std::string("synthetic stream config: ") + e.what());
  }
}

inline void to_json(nlohmann::json &j, const StandardizationParams &p) {
  j = {{"mean", p.mean}, {"std", p.std}};
}

inline void from_json(const nlohmann::json &j, StandardizationParams &p) {
  j.at("mean").get_to(p.mean);
  j.at("std").get_to(p.std);
  if (p.mean.size() != p.std.size())
    throw ParseError("standardizer mean/std length mismatch", 0);
  for (double s : p.std)
    if (!(s > 0))
      throw ParseError("standardizer std entries must be positive", 0);
}

} // namespace rcl
