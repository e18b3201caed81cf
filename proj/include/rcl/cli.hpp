#pragma once

// Experiment configuration and the `synth`, `run` and `validate` commands.
// Commands return the process exit status: 0 success, 1 runtime failure,
// 2 configuration or validation failure.

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "rcl/classifier.hpp"
#include "rcl/common.hpp"
#include "rcl/continual.hpp"
#include "rcl/data.hpp"
#include "rcl/report.hpp"

namespace rcl::cli {

namespace fs = std::filesystem;
using nlohmann::json;

inline constexpr int exit_ok = 0;
inline constexpr int exit_runtime = 1;
inline constexpr int exit_config = 2;

/// One JSON document fully describes an experiment:
///
///   data          {"path": "<csv>"} or {"synthetic": <stream config>}
///   window        window length (default 50); stride defaults to window
///   class_order   raw class ids, normal class first (default: sorted ids)
///   train_trials  trial ids used for training (default [1]); others test
///   classifiers   [{"name": .., "nets": [<net spec per task> | one spec]}]
///   train         {"epochs", "batch_size", "learning_rate", "optimizer",
///                  "momentum"}
///   ensemble_size members per ensemble (default 5)
///   generator     {"k", "memory_budget", "pseudo_size"}
///   ewc_lambda    default 100
///   warm_start    rcl only, default false
///   strategies    subset of ["rcl", "ewc", "finetune", "baseline"]
///   repetitions   default 5
///   output_dir    default "results"
///   master_seed   default 0
struct ExperimentConfig {
  std::optional<std::string> data_path;
  std::optional<SyntheticStreamConfig> synthetic;
  std::size_t window = 50;
  std::size_t stride = 50;
  std::vector<int> class_order;
  std::vector<int> train_trials{1};
  std::vector<ClassifierVariant> classifiers;
  TrainConfig train;
  std::size_t ensemble_size = default_ensemble_size;
  GeneratorConfig generator;
  double ewc_lambda = 100.0;
  bool warm_start = false;
  std::vector<Strategy> strategies{Strategy::rcl, Strategy::ewc,
                                   Strategy::finetune, Strategy::baseline};
  std::size_t repetitions = 5;
  std::string output_dir = "results";
  std::uint64_t master_seed = 0;

  fs::path base_dir; // directory of the config file; relative paths resolve here
  json document;     // the parsed document with command-line overrides applied
};

namespace detail {

template <class T>
T field(const json &j, const char *name, const T &fallback) {
  if (!j.contains(name) || j.at(name).is_null())
    return fallback;
  try {
    return j.at(name).get<T>();
  } catch (const json::exception &) {
    throw ConfigError(std::string("field '") + name + "' has the wrong type");
  }
}

template <class F> auto in_field(const std::string &name, F &&f) {
  try {
    return f();
  } catch (const json::exception &e) {
    throw ConfigError("field '" + name + "': " + e.what());
  } catch (const ConfigError &e) {
    throw ConfigError("field '" + name + "': " + e.what());
  }
}

} // namespace detail

inline ExperimentConfig parse_experiment(const json &doc,
                                         const fs::path &base_dir = {}) {
  if (!doc.is_object())
    throw ConfigError("experiment config must be a JSON object");
  ExperimentConfig c;
  c.base_dir = base_dir;
  c.document = doc;

  if (!doc.contains("data") || !doc.at("data").is_object())
    throw ConfigError("field 'data' is required");
  const auto &data = doc.at("data");
  const bool has_path = data.contains("path"), has_synth =
                                                   data.contains("synthetic");
  if (has_path == has_synth)
    throw ConfigError(
        "field 'data' needs exactly one of 'path' or 'synthetic'");
  if (has_path)
    c.data_path = detail::field<std::string>(data, "path", "");
  else
    c.synthetic = detail::in_field("data.synthetic", [&] {
      auto s = data.at("synthetic").get<SyntheticStreamConfig>();
      validate(s);
      return s;
    });

  c.window = detail::field<std::size_t>(doc, "window", 50);
  c.stride = detail::field<std::size_t>(doc, "stride", c.window);
  if (c.window < 1)
    throw ConfigError("field 'window' must be >= 1");
  if (c.stride < 1)
    throw ConfigError("field 'stride' must be >= 1");
  c.class_order = detail::field<std::vector<int>>(doc, "class_order", {});
  c.train_trials = detail::field<std::vector<int>>(doc, "train_trials", {1});
  if (c.train_trials.empty())
    throw ConfigError("field 'train_trials' must not be empty");

  if (doc.contains("classifiers")) {
    detail::in_field("classifiers", [&] {
      for (const auto &v : doc.at("classifiers")) {
        ClassifierVariant cv;
        cv.name = v.at("name").get<std::string>();
        for (const auto &n : v.at("nets"))
          cv.nets.push_back(n.get<NetSpec>());
        if (cv.nets.empty())
          throw ConfigError("classifier '" + cv.name + "' has no nets");
        c.classifiers.push_back(std::move(cv));
      }
      return 0;
    });
  }
  if (c.classifiers.empty())
    c.classifiers.push_back({"MLP", {NetSpec{}}});
  std::set<std::string> names;
  for (const auto &v : c.classifiers)
    if (!names.insert(v.name).second)
      throw ConfigError("field 'classifiers': duplicate name '" + v.name + "'");

  if (doc.contains("train"))
    c.train = detail::in_field("train",
                               [&] { return doc.at("train").get<TrainConfig>(); });
  c.ensemble_size = detail::field<std::size_t>(doc, "ensemble_size", 5);
  if (c.ensemble_size < 1)
    throw ConfigError("field 'ensemble_size' must be >= 1");
  if (doc.contains("generator")) {
    const auto &g = doc.at("generator");
    c.generator.k = detail::field<std::size_t>(g, "k", 5);
    c.generator.memory_budget =
        detail::field<std::size_t>(g, "memory_budget", unlimited_budget);
    if (g.contains("pseudo_size") && !g.at("pseudo_size").is_null())
      c.generator.pseudo_size = detail::field<std::size_t>(g, "pseudo_size", 0);
    if (c.generator.k < 1)
      throw ConfigError("field 'generator.k' must be >= 1");
    if (c.generator.memory_budget < 2)
      throw ConfigError("field 'generator.memory_budget' must be >= 2");
    if (c.generator.pseudo_size && *c.generator.pseudo_size < 1)
      throw ConfigError("field 'generator.pseudo_size' must be >= 1");
  }
  c.ewc_lambda = detail::field<double>(doc, "ewc_lambda", 100.0);
  if (!(c.ewc_lambda >= 0))
    throw ConfigError("field 'ewc_lambda' must be >= 0");
  c.warm_start = detail::field<bool>(doc, "warm_start", false);
  if (doc.contains("strategies")) {
    c.strategies.clear();
    for (const auto &s :
         detail::field<std::vector<std::string>>(doc, "strategies", {}))
      c.strategies.push_back(
          detail::in_field("strategies", [&] { return parse_strategy(s); }));
    if (c.strategies.empty())
      throw ConfigError("field 'strategies' must not be empty");
  }
  c.repetitions = detail::field<std::size_t>(doc, "repetitions", 5);
  if (c.repetitions < 1)
    throw ConfigError("field 'repetitions' must be >= 1");
  c.output_dir = detail::field<std::string>(doc, "output_dir", "results");
  c.master_seed = detail::field<std::uint64_t>(doc, "master_seed", 0);
  return c;
}

inline json read_json_file(const fs::path &path) {
  std::ifstream in(path);
  if (!in)
    throw ConfigError("cannot open config file '" + path.string() + "'");
  try {
    return json::parse(in);
  } catch (const json::parse_error &e) {
    throw ConfigError("config file '" + path.string() +
                      "' is not valid JSON: " + e.what());
  }
}

inline ExperimentConfig load_experiment(const fs::path &path) {
  return parse_experiment(read_json_file(path), path.parent_path());
}

inline fs::path resolve(const ExperimentConfig &c, const std::string &p) {
  fs::path path(p);
  return path.is_absolute() || c.base_dir.empty() ? path : c.base_dir / path;
}

inline std::string read_file(const fs::path &path) {
  std::ifstream in(path, std::ios::binary);
  if (!in)
    throw ParseError("cannot open '" + path.string() + "'", 0);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

/// Writes via a temporary sibling and renames it into place.
inline void write_atomic(const fs::path &path, const std::string &content) {
  fs::path tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out)
      throw Error("cannot write '" + tmp.string() + "'");
    out << content;
    if (!out)
      throw Error("failed writing '" + tmp.string() + "'");
  }
  fs::rename(tmp, path);
}

struct LoadedData {
  std::vector<TimeSeriesTrial> trials;
  std::vector<CsvViolation> violations;
  std::string source; // "file" or "synthetic"
  std::string digest; // fnv1a64 of the file bytes or the synthetic config
};

inline LoadedData load_data(const ExperimentConfig &c) {
  LoadedData d;
  if (c.synthetic) {
    d.source = "synthetic";
    d.trials = synthesize_stream(*c.synthetic);
    d.digest = "fnv1a64:" + hex64(fnv1a64(json(*c.synthetic).dump()));
    return d;
  }
  d.source = "file";
  const auto bytes = read_file(resolve(c, *c.data_path));
  d.digest = "fnv1a64:" + hex64(fnv1a64(bytes));
  std::istringstream in(bytes);
  auto scan = scan_trials_csv(in);
  d.trials = std::move(scan.trials);
  d.violations = std::move(scan.violations);
  return d;
}

inline std::vector<int> class_order_for(const ExperimentConfig &c,
                                        std::span<const TimeSeriesTrial> trials) {
  if (!c.class_order.empty())
    return c.class_order;
  std::set<int> ids;
  for (const auto &t : trials)
    ids.insert(t.class_id);
  return {ids.begin(), ids.end()};
}

/// Every violation of the config against the loaded data (empty if valid).
inline std::vector<std::string>
check_experiment(const ExperimentConfig &c,
                 std::span<const TimeSeriesTrial> trials) {
  std::vector<std::string> issues;
  const auto order = class_order_for(c, trials);
  if (order.size() < 2)
    issues.push_back("class_order: need at least 2 classes, found " +
                     std::to_string(order.size()));
  std::set<int> seen;
  for (int cls : order) {
    if (!seen.insert(cls).second)
      issues.push_back("class_order: class " + std::to_string(cls) +
                       " listed twice");
    bool any = false, train = false, test = false;
    for (const auto &t : trials)
      if (t.class_id == cls) {
        any = true;
        const bool is_train =
            std::find(c.train_trials.begin(), c.train_trials.end(),
                      t.trial_id) != c.train_trials.end();
        (is_train ? train : test) = true;
      }
    if (!any)
      issues.push_back("class_order: class " + std::to_string(cls) +
                       " does not exist in the data");
    else {
      if (!train)
        issues.push_back("class " + std::to_string(cls) +
                         " has no training trial");
      if (!test)
        issues.push_back("class " + std::to_string(cls) + " has no test trial");
    }
  }
  for (const auto &t : trials)
    if (t.length < c.window)
      issues.push_back("window " + std::to_string(c.window) +
                       " exceeds length " + std::to_string(t.length) +
                       " of trial (class " + std::to_string(t.class_id) +
                       ", trial " + std::to_string(t.trial_id) + ")");
  const std::size_t n_tasks = order.size() >= 1 ? order.size() - 1 : 0;
  const std::size_t channels = trials.empty() ? 0 : trials.front().channels;
  for (const auto &v : c.classifiers) {
    if (v.nets.size() != 1 && v.nets.size() != n_tasks)
      issues.push_back("classifier '" + v.name + "' lists " +
                       std::to_string(v.nets.size()) + " nets for " +
                       std::to_string(n_tasks) + " tasks");
    for (std::size_t i = 0; i < v.nets.size() && channels > 0; ++i) {
      NetSpec s = v.nets[i];
      s.window = c.window;
      s.channels = channels;
      s.n_classes = std::max<std::size_t>(2, i + 2);
      try {
        make_layout(s);
      } catch (const ConfigError &e) {
        issues.push_back("classifier '" + v.name + "' net " +
                         std::to_string(i + 1) + ": " + e.what());
      }
    }
    bool uniform = true;
    for (const auto &n : v.nets)
      uniform = uniform && n.same_architecture(v.nets.front());
    if (!uniform)
      for (auto s : c.strategies)
        if (s == Strategy::ewc || s == Strategy::finetune)
          issues.push_back(to_string(s) + " cannot use classifier '" + v.name +
                           "': its architecture changes between tasks");
  }
  return issues;
}

inline ComparisonConfig comparison_config(const ExperimentConfig &c) {
  ComparisonConfig cc;
  cc.strategies = c.strategies;
  cc.variants = c.classifiers;
  cc.base.train = c.train;
  cc.base.ensemble_size = c.ensemble_size;
  cc.base.generator = c.generator;
  cc.base.ewc_lambda = c.ewc_lambda;
  cc.base.warm_start = c.warm_start;
  cc.repetitions = c.repetitions;
  cc.master_seed = c.master_seed;
  return cc;
}

// ------------------------------------------------------------------ synth

inline int cmd_synth(const fs::path &config_path, const fs::path &out_path,
                     std::optional<std::uint64_t> seed, std::ostream &out,
                     std::ostream &err) {
  SyntheticStreamConfig cfg;
  try {
    const auto doc = read_json_file(config_path);
    cfg = doc.get<SyntheticStreamConfig>();
    if (seed)
      cfg.seed = *seed;
    validate(cfg);
  } catch (const Error &e) {
    err << "synth: invalid config: " << e.what() << "\n";
    return exit_config;
  } catch (const nlohmann::json::exception &e) {
    err << "synth: invalid config: " << e.what() << "\n";
    return exit_config;
  }
  try {
    const auto trials = synthesize_stream(cfg);
    std::ostringstream csv;
    save_trials(csv, trials);
    if (out_path.has_parent_path())
      fs::create_directories(out_path.parent_path());
    write_atomic(out_path, csv.str());
    out << "wrote " << trials.size() << " trials to " << out_path.string()
        << "\n";
    for (int c = 0; c < cfg.n_classes; ++c) {
      std::vector<double> sum(static_cast<std::size_t>(cfg.channels), 0.0),
          sq(sum.size(), 0.0);
      std::size_t n = 0;
      for (const auto &t : trials)
        if (t.class_id == c)
          for (std::size_t s = 0; s < t.length; ++s, ++n)
            for (std::size_t ch = 0; ch < t.channels; ++ch) {
              sum[ch] += t.at(s, ch);
              sq[ch] += t.at(s, ch) * t.at(s, ch);
            }
      out << "class " << c << ": " << cfg.trials_per_class << " trials x "
          << cfg.trial_length << " steps";
      for (std::size_t ch = 0; ch < sum.size(); ++ch) {
        const double m = sum[ch] / static_cast<double>(n);
        const double sd =
            std::sqrt(std::max(0.0, sq[ch] / static_cast<double>(n) - m * m));
        out << ", ch" << ch + 1 << " mean " << report::fixed3(m) << " std "
            << report::fixed3(sd);
      }
      out << "\n";
    }
  } catch (const std::exception &e) {
    err << "synth: " << e.what() << "\n";
    return exit_runtime;
  }
  return exit_ok;
}

// --------------------------------------------------------------- validate

inline int cmd_validate(const fs::path &config_path, std::ostream &out,
                        std::ostream &err) {
  ExperimentConfig c;
  try {
    c = load_experiment(config_path);
  } catch (const Error &e) {
    err << "violation: " << e.what() << "\n";
    return exit_config;
  }
  LoadedData data;
  try {
    data = load_data(c);
  } catch (const Error &e) {
    err << "violation: " << e.what() << "\n";
    return exit_config;
  }
  std::vector<std::string> issues;
  for (const auto &v : data.violations)
    issues.push_back("data row " + std::to_string(v.row) + ": " + v.message);
  if (data.violations.empty()) {
    auto more = check_experiment(c, data.trials);
    issues.insert(issues.end(), more.begin(), more.end());
  }
  if (!issues.empty()) {
    for (const auto &i : issues)
      err << "violation: " << i << "\n";
    return exit_config;
  }
  out << "OK\n";
  const auto order = class_order_for(c, data.trials);
  out << "classes: " << order.size() << " (tasks: " << order.size() - 1
      << ")\n";
  for (std::size_t label = 0; label < order.size(); ++label) {
    std::size_t n_trials = 0, n_train = 0, n_test = 0;
    for (const auto &t : data.trials) {
      if (t.class_id != order[label])
        continue;
      ++n_trials;
      const std::size_t w = (t.length - c.window) / c.stride + 1;
      const bool is_train =
          std::find(c.train_trials.begin(), c.train_trials.end(),
                    t.trial_id) != c.train_trials.end();
      (is_train ? n_train : n_test) += w;
    }
    out << "class " << order[label] << " (label " << label << "): " << n_trials
        << " trials, " << n_train << " train windows, " << n_test
        << " test windows\n";
  }
  return exit_ok;
}

// -------------------------------------------------------------------- run

struct RunOverrides {
  std::optional<fs::path> out_dir;
  std::optional<std::uint64_t> seed;
  std::optional<std::size_t> repetitions;
};

inline json build_manifest(const ExperimentConfig &c, const LoadedData &data,
                           const ComparisonReport &rep,
                           const report::MetricsTable &table) {
  json runs = json::array();
  for (std::size_t i = 0; i < rep.runs.size(); ++i) {
    const auto &r = rep.runs[i];
    json jr = {{"method", r.method},
               {"strategy", to_string(r.strategy)},
               {"classifier", r.variant},
               {"repetition", r.repetition},
               {"seed", r.seed},
               {"status", r.error.empty() ? "ok" : "FAILED"},
               {"metrics_rows", {table.spans[i].first, table.spans[i].last}}};
    if (!r.error.empty())
      jr["error"] = r.error;
    if (r.run) {
      jr["replay_counts"] = r.run->replay_counts;
      jr["memory_footprint"] = r.run->memory_footprint;
      json members = json::array();
      for (const auto &t : r.run->tasks) {
        std::vector<double> f;
        for (const auto &m : t.member_reports)
          f.push_back(m.macro_f);
        members.push_back(f);
      }
      jr["member_macro_f"] = members;
    }
    runs.push_back(jr);
  }
  std::vector<std::uint64_t> rep_seeds;
  for (std::size_t r = 0; r < c.repetitions; ++r)
    rep_seeds.push_back(repetition_seed(c.master_seed, r));
  std::vector<std::string> strategies;
  for (auto s : c.strategies)
    strategies.push_back(to_string(s));
  json data_info = {{"source", data.source}, {"digest", data.digest}};
  if (c.data_path)
    data_info["path"] = *c.data_path;
  return {{"master_seed", c.master_seed},
          {"repetitions", c.repetitions},
          {"repetition_seeds", rep_seeds},
          {"seed_derivation",
           "repetition r: derive_seed(master_seed, \"repetition/<r>\")"},
          {"strategies", strategies},
          {"config", c.document},
          {"data", data_info},
          {"outputs", {"manifest.json", "metrics.csv", "report.md"}},
          {"runs", runs}};
}

inline int cmd_run(const fs::path &config_path, const RunOverrides &ov,
                   std::ostream &out, std::ostream &err) {
  ExperimentConfig c;
  LoadedData data;
  TaskSequence seq;
  try {
    auto doc = read_json_file(config_path);
    if (ov.seed)
      doc["master_seed"] = *ov.seed;
    if (ov.repetitions)
      doc["repetitions"] = *ov.repetitions;
    c = parse_experiment(doc, config_path.parent_path());
    data = load_data(c);
    if (!data.violations.empty())
      throw ParseError(data.violations.front().message,
                       data.violations.front().row);
    const auto issues = check_experiment(c, data.trials);
    if (!issues.empty())
      throw ConfigError(issues.front());
    const auto order = class_order_for(c, data.trials);
    seq = make_task_sequence(data.trials, order, c.window, c.stride,
                             c.train_trials);
  } catch (const Error &e) {
    err << "run: invalid configuration: " << e.what() << "\n";
    return exit_config;
  }

  const fs::path dir = ov.out_dir ? *ov.out_dir : resolve(c, c.output_dir);
  try {
    const auto rep = compare_strategies(seq, comparison_config(c));
    const auto table = report::metrics_table(rep);
    fs::create_directories(dir);
    write_atomic(dir / "metrics.csv", table.csv());
    write_atomic(dir / "report.md", report::markdown(rep, c.repetitions));
    write_atomic(dir / "manifest.json",
                 build_manifest(c, data, rep, table).dump(2) + "\n");
    out << report::task_table(rep);
    if (rep.variants.size() > 1)
      out << "\n" << report::classifier_table(rep);
    out << "\nwrote " << (dir / "report.md").string() << "\n";
    if (rep.failed()) {
      for (const auto &r : rep.runs)
        if (!r.error.empty())
          err << "FAILED " << r.error << "\n";
      return exit_runtime;
    }
  } catch (const std::exception &e) {
    err << "run: " << e.what() << "\n";
    return exit_runtime;
  }
  return exit_ok;
}

} // namespace rcl::cli
