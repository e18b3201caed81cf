#pragma once

// Class-incremental task sequences and the four training strategies:
//   rcl       pseudo-replay: per-class SMOTE generators, fresh ensemble per task
//   finetune  keep training one network on new-task data (normal + new class)
//   ewc       finetune plus a Fisher-weighted quadratic anchor
//   baseline  joint training on all raw data seen so far
//
// Seeds. Every random stream inside a run is derived from the run seed:
//   generator memory subset  derive_seed(seed, "generator/<c>")
//   pseudo samples           derive_seed(seed, "generate/task/<i>/class/<c>")
//   ensemble at task i       derive_seed(seed, "task/<i>") then per member
//                            (see member_init_seed / member_shuffle_seed)
//   new output rows          derive_seed(seed, "task/<i>/head/<m>")
// Strategies share these roles, so task 1 of finetune, ewc and baseline is
// the same computation under the same run seed.

#include <algorithm>
#include <map>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <vector>

#include "rcl/classifier.hpp"
#include "rcl/common.hpp"
#include "rcl/data.hpp"
#include "rcl/eval.hpp"
#include "rcl/generator.hpp"

namespace rcl {

enum class Strategy { rcl, ewc, finetune, baseline };

inline std::string to_string(Strategy s) {
  switch (s) {
  case Strategy::rcl:
    return "rcl";
  case Strategy::ewc:
    return "ewc";
  case Strategy::finetune:
    return "finetune";
  case Strategy::baseline:
    return "baseline";
  }
  return "?";
}

inline Strategy parse_strategy(const std::string &s) {
  if (s == "rcl")
    return Strategy::rcl;
  if (s == "ewc")
    return Strategy::ewc;
  if (s == "finetune")
    return Strategy::finetune;
  if (s == "baseline")
    return Strategy::baseline;
  throw ConfigError("unknown strategy \"" + s +
                    "\" (expected rcl, ewc, finetune or baseline)");
}

struct ClassData {
  int source_class_id = 0;
  std::vector<WindowedSample> train;
  std::vector<WindowedSample> test;
};

/// classes[0] is the normal class; task i (1..n_tasks) introduces classes[i].
/// Sample class_id values are the internal labels 0..n_tasks.
struct TaskSequence {
  std::size_t window = 0;
  std::size_t channels = 0;
  std::vector<ClassData> classes;

  std::size_t n_tasks() const {
    return classes.empty() ? 0 : classes.size() - 1;
  }
};

/// Windows every trial and splits by trial id. `class_order[i]` is the raw
/// class id that becomes internal label i.
inline TaskSequence make_task_sequence(std::span<const TimeSeriesTrial> trials,
                                       std::span<const int> class_order,
                                       std::size_t window, std::size_t stride,
                                       std::span<const int> train_trials) {
  if (class_order.size() < 2)
    throw ConfigError("a task sequence needs at least 2 classes");
  if (train_trials.empty())
    throw ConfigError("train_trials must name at least one trial");
  const std::set<int> train_set(train_trials.begin(), train_trials.end());
  TaskSequence seq;
  seq.window = window;
  for (std::size_t label = 0; label < class_order.size(); ++label) {
    ClassData cd;
    cd.source_class_id = class_order[label];
    for (std::size_t o = 0; o < label; ++o)
      if (class_order[o] == cd.source_class_id)
        throw ConfigError("class " + std::to_string(cd.source_class_id) +
                          " listed twice in the task order");
    for (const auto &t : trials) {
      if (t.class_id != cd.source_class_id)
        continue;
      if (seq.channels == 0)
        seq.channels = t.channels;
      else if (seq.channels != t.channels)
        throw DataError("trials disagree on channel count");
      auto w = window_trial(t, window, stride);
      for (auto &s : w)
        s.class_id = static_cast<int>(label);
      auto &dst = train_set.count(t.trial_id) ? cd.train : cd.test;
      dst.insert(dst.end(), std::make_move_iterator(w.begin()),
                 std::make_move_iterator(w.end()));
    }
    if (cd.train.empty())
      throw DataError("class " + std::to_string(cd.source_class_id) +
                      " has no training windows");
    if (cd.test.empty())
      throw DataError("class " + std::to_string(cd.source_class_id) +
                      " has no test windows");
    seq.classes.push_back(std::move(cd));
  }
  return seq;
}

struct GeneratorConfig {
  std::size_t k = 5;
  std::size_t memory_budget = unlimited_budget;
  /// Pseudo samples per previous class; default is the size of the current
  /// task's real class data.
  std::optional<std::size_t> pseudo_size;
};

struct ContinualConfig {
  /// Architecture per task (index = task - 1). A single entry applies to
  /// every task. Input shape, class count and seed are filled in per task.
  std::vector<NetSpec> nets{NetSpec{}};
  TrainConfig train;
  std::size_t ensemble_size = default_ensemble_size;
  GeneratorConfig generator;
  double ewc_lambda = 100.0;
  /// rcl only: start C_i from C_{i-1} with an extended head instead of a
  /// fresh initialization (same architecture required).
  bool warm_start = false;
  std::uint64_t seed = 0;
};

struct TaskResult {
  std::size_t task = 0;
  std::size_t n_classes = 0;
  Ensemble ensemble;
  ConfusionMatrix cm;
  MetricReport report;
  std::vector<MetricReport> member_reports;
  /// Training-set composition per internal label, from provenance tags.
  std::vector<std::size_t> raw_train_count;
  std::vector<std::size_t> synthetic_train_count;
};

struct ContinualRun {
  Strategy strategy = Strategy::rcl;
  std::uint64_t seed = 0;
  std::vector<TaskResult> tasks;
  std::vector<ClassGenerator> generators; // rcl only
  /// Synthetic samples generated per class over the whole run.
  std::vector<std::size_t> replay_counts;
  /// Raw vectors kept around for use at later tasks: generator memories for
  /// rcl, reused normal data for finetune/ewc, every earlier class for
  /// baseline.
  std::size_t memory_footprint = 0;
};

namespace detail {

inline NetSpec net_for_task(const ContinualConfig &cfg, const TaskSequence &seq,
                            std::size_t task) {
  if (cfg.nets.empty())
    throw ConfigError("no net spec configured");
  NetSpec s = cfg.nets.size() == 1 ? cfg.nets.front()
                                   : cfg.nets.at(task - 1);
  if (cfg.nets.size() != 1 && cfg.nets.size() != seq.n_tasks())
    throw ConfigError("need one net spec per task (" +
                      std::to_string(seq.n_tasks()) + "), got " +
                      std::to_string(cfg.nets.size()));
  s.window = seq.window;
  s.channels = seq.channels;
  s.n_classes = task + 1;
  return s;
}

inline std::uint64_t task_seed(std::uint64_t seed, std::size_t task) {
  return derive_seed(seed, "task/" + std::to_string(task));
}

inline void append(std::vector<WindowedSample> &dst,
                   std::span<const WindowedSample> src) {
  dst.insert(dst.end(), src.begin(), src.end());
}

inline void evaluate(TaskResult &r, const TaskSequence &seq) {
  std::vector<WindowedSample> test;
  for (std::size_t c = 0; c <= r.task; ++c)
    append(test, seq.classes[c].test);
  const auto truth = labels_of(test);
  const auto pred = predict(r.ensemble, test);
  r.cm = confusion(truth, pred, r.n_classes);
  r.report = metrics(r.cm);
  r.member_reports.clear();
  for (std::size_t m = 0; m < r.ensemble.members.size(); ++m)
    r.member_reports.push_back(metrics(
        confusion(truth, predict_member(r.ensemble, m, test), r.n_classes)));
}

inline void record_composition(TaskResult &r,
                               std::span<const WindowedSample> train) {
  r.raw_train_count.assign(r.n_classes, 0);
  r.synthetic_train_count.assign(r.n_classes, 0);
  for (const auto &s : train) {
    auto c = static_cast<std::size_t>(s.class_id);
    if (s.source.origin == Origin::raw)
      ++r.raw_train_count[c];
    else
      ++r.synthetic_train_count[c];
  }
}

inline void check_sequence(const TaskSequence &seq) {
  if (seq.classes.size() < 2)
    throw ConfigError("a task sequence needs at least 2 classes");
}

/// Rethrows with the task index attached.
template <class F> auto at_task(std::size_t task, F &&f) -> decltype(f()) {
  try {
    return f();
  } catch (const ConfigError &e) {
    throw ConfigError("task " + std::to_string(task) + ": " + e.what());
  } catch (const TrainingError &e) {
    throw TrainingError("task " + std::to_string(task) + ": " + e.what());
  } catch (const Error &e) {
    throw DataError("task " + std::to_string(task) + ": " + e.what());
  }
}

} // namespace detail

// ---------------------------------------------------------------------- rcl

/// Pseudo-replay: G_0 is fitted first; at task i, G_i is fitted on class i,
/// every earlier generator emits a fresh pseudo set, and a new ensemble C_i
/// is trained on {pseudo_0..pseudo_{i-1}, real_i} with its own standardizer.
inline ContinualRun run_rcl(const TaskSequence &seq,
                            const ContinualConfig &cfg) {
  detail::check_sequence(seq);
  ContinualRun run;
  run.strategy = Strategy::rcl;
  run.seed = cfg.seed;
  run.replay_counts.assign(seq.classes.size(), 0);

  auto fit_gen = [&](std::size_t c) {
    return fit_generator(static_cast<int>(c), seq.classes[c].train,
                         cfg.generator.k, cfg.generator.memory_budget,
                         derive_seed(cfg.seed, "generator/" + std::to_string(c)));
  };
  run.generators.push_back(detail::at_task(0, [&] { return fit_gen(0); }));

  for (std::size_t i = 1; i <= seq.n_tasks(); ++i) {
    detail::at_task(i, [&] {
      run.generators.push_back(fit_gen(i));
      const auto &real = seq.classes[i].train;
      const std::size_t S = cfg.generator.pseudo_size.value_or(real.size());
      std::vector<WindowedSample> mix;
      for (std::size_t c = 0; c < i; ++c) {
        auto pseudo = generate(run.generators[c], {S},
                               derive_seed(cfg.seed, "generate/task/" +
                                                         std::to_string(i) +
                                                         "/class/" +
                                                         std::to_string(c)));
        run.replay_counts[c] += pseudo.size();
        detail::append(mix, pseudo);
      }
      detail::append(mix, real);

      TaskResult r;
      r.task = i;
      r.n_classes = i + 1;
      const NetSpec spec = detail::net_for_task(cfg, seq, i);
      const auto tseed = detail::task_seed(cfg.seed, i);
      const bool warm = cfg.warm_start && i > 1 &&
                        run.tasks.back().ensemble.members.front().spec
                            .same_architecture(spec);
      if (!warm) {
        r.ensemble = fit_ensemble(spec, mix, cfg.train, cfg.ensemble_size,
                                  tseed);
      } else {
        r.ensemble.standardizer = fit_standardizer(mix);
        const auto z = apply_standardizer(r.ensemble.standardizer, mix);
        const auto &prev = run.tasks.back().ensemble.members;
        for (std::size_t m = 0; m < prev.size(); ++m) {
          auto ext = extend_head(prev[m], i + 1,
                                 derive_seed(cfg.seed, "task/" +
                                                           std::to_string(i) +
                                                           "/head/" +
                                                           std::to_string(m)));
          TrainConfig tc = cfg.train;
          tc.shuffle_seed = member_shuffle_seed(tseed, m);
          r.ensemble.members.push_back(train(ext.model, z, tc).model);
        }
      }
      detail::record_composition(r, mix);
      detail::evaluate(r, seq);
      run.tasks.push_back(std::move(r));
    });
  }
  for (const auto &g : run.generators)
    run.memory_footprint += g.size();
  return run;
}

// ------------------------------------------------------ finetune and ewc

namespace detail {

/// Task 1 trains an ensemble on raw {0, 1}. Task i >= 2 extends every
/// member's head and keeps training on raw {0, i}, standardized with the
/// task-1 parameters. With `ewc`, each member is anchored to its previous
/// parameters weighted by the Fisher diagonal on the previous task's data.
inline ContinualRun run_sequential(const TaskSequence &seq,
                                   const ContinualConfig &cfg, bool ewc,
                                   double lambda) {
  check_sequence(seq);
  if (ewc && !(lambda >= 0))
    throw ConfigError("EWC lambda must be >= 0");
  ContinualRun run;
  run.strategy = ewc ? Strategy::ewc : Strategy::finetune;
  run.seed = cfg.seed;
  run.replay_counts.assign(seq.classes.size(), 0);

  const NetSpec first = net_for_task(cfg, seq, 1);
  for (std::size_t i = 2; i <= seq.n_tasks(); ++i)
    if (!net_for_task(cfg, seq, i).same_architecture(first))
      throw ConfigError(to_string(run.strategy) +
                        " cannot change the classifier architecture between "
                        "tasks");

  std::vector<WindowedSample> prev_train;
  for (std::size_t i = 1; i <= seq.n_tasks(); ++i) {
    at_task(i, [&] {
      std::vector<WindowedSample> data;
      append(data, seq.classes[0].train);
      append(data, seq.classes[i].train);
      TaskResult r;
      r.task = i;
      r.n_classes = i + 1;
      const auto tseed = task_seed(cfg.seed, i);
      if (i == 1) {
        r.ensemble = fit_ensemble(first, data, cfg.train, cfg.ensemble_size,
                                  tseed);
      } else {
        const auto &prev = run.tasks.back().ensemble;
        r.ensemble.standardizer = prev.standardizer;
        const auto z = apply_standardizer(prev.standardizer, data);
        const auto zprev = apply_standardizer(prev.standardizer, prev_train);
        for (std::size_t m = 0; m < prev.members.size(); ++m) {
          const auto &old = prev.members[m];
          auto ext = extend_head(old, i + 1,
                                 derive_seed(cfg.seed, "task/" +
                                                           std::to_string(i) +
                                                           "/head/" +
                                                           std::to_string(m)));
          TrainConfig tc = cfg.train;
          tc.shuffle_seed = member_shuffle_seed(tseed, m);
          if (ewc) {
            const EWCPenalty anchor{lambda, old.params,
                                    fisher_diagonal(old, zprev)};
            const auto pen = remap_penalty(anchor, ext.old_index);
            r.ensemble.members.push_back(
                train(ext.model, z, tc, &pen).model);
          } else {
            r.ensemble.members.push_back(train(ext.model, z, tc).model);
          }
        }
      }
      record_composition(r, data);
      evaluate(r, seq);
      run.tasks.push_back(std::move(r));
      prev_train = std::move(data);
    });
  }
  if (seq.n_tasks() >= 2)
    run.memory_footprint = seq.classes[0].train.size();
  return run;
}

} // namespace detail

inline ContinualRun run_finetune(const TaskSequence &seq,
                                 const ContinualConfig &cfg) {
  return detail::run_sequential(seq, cfg, false, 0.0);
}

inline ContinualRun run_ewc(const TaskSequence &seq,
                            const ContinualConfig &cfg) {
  return detail::run_sequential(seq, cfg, true, cfg.ewc_lambda);
}

inline ContinualRun run_ewc(const TaskSequence &seq, const ContinualConfig &cfg,
                            double lambda) {
  return detail::run_sequential(seq, cfg, true, lambda);
}

// ---------------------------------------------------------------- baseline

/// Joint training from scratch at every task on raw data of classes 0..i.
inline ContinualRun run_baseline(const TaskSequence &seq,
                                 const ContinualConfig &cfg) {
  detail::check_sequence(seq);
  ContinualRun run;
  run.strategy = Strategy::baseline;
  run.seed = cfg.seed;
  run.replay_counts.assign(seq.classes.size(), 0);
  for (std::size_t i = 1; i <= seq.n_tasks(); ++i) {
    detail::at_task(i, [&] {
      std::vector<WindowedSample> data;
      for (std::size_t c = 0; c <= i; ++c)
        detail::append(data, seq.classes[c].train);
      TaskResult r;
      r.task = i;
      r.n_classes = i + 1;
      r.ensemble = fit_ensemble(detail::net_for_task(cfg, seq, i), data,
                                cfg.train, cfg.ensemble_size,
                                detail::task_seed(cfg.seed, i));
      detail::record_composition(r, data);
      detail::evaluate(r, seq);
      run.tasks.push_back(std::move(r));
    });
  }
  for (std::size_t c = 0; c + 1 < seq.classes.size(); ++c)
    run.memory_footprint += seq.classes[c].train.size();
  return run;
}

inline ContinualRun run_strategy(Strategy s, const TaskSequence &seq,
                                 const ContinualConfig &cfg) {
  switch (s) {
  case Strategy::rcl:
    return run_rcl(seq, cfg);
  case Strategy::ewc:
    return run_ewc(seq, cfg);
  case Strategy::finetune:
    return run_finetune(seq, cfg);
  case Strategy::baseline:
    return run_baseline(seq, cfg);
  }
  throw ConfigError("unknown strategy");
}

/// Every previous-class sample in every rcl training set must be synthetic.
/// Returns a description of each violation (empty when the run is clean).
inline std::vector<std::string> audit_replay(const ContinualRun &run) {
  std::vector<std::string> issues;
  if (run.strategy != Strategy::rcl)
    return issues;
  for (const auto &t : run.tasks)
    for (std::size_t c = 0; c < t.task && c < t.raw_train_count.size(); ++c)
      if (t.raw_train_count[c] != 0)
        issues.push_back("task " + std::to_string(t.task) + " trained on " +
                         std::to_string(t.raw_train_count[c]) +
                         " raw samples of class " + std::to_string(c));
  std::size_t retained = 0;
  for (const auto &g : run.generators)
    retained += g.size();
  if (retained != run.memory_footprint)
    issues.push_back("memory_footprint " +
                     std::to_string(run.memory_footprint) +
                     " != retained generator vectors " +
                     std::to_string(retained));
  return issues;
}

// ---------------------------------------------------------------- compare

struct ClassifierVariant {
  std::string name;
  std::vector<NetSpec> nets; // per task, or one for all
};

struct ComparisonConfig {
  std::vector<Strategy> strategies{Strategy::rcl, Strategy::ewc,
                                   Strategy::finetune, Strategy::baseline};
  /// Empty means a single variant built from base.nets.
  std::vector<ClassifierVariant> variants;
  ContinualConfig base;
  std::size_t repetitions = 5;
  std::uint64_t master_seed = 0;
  /// Overrides the derived per-repetition seeds when non-empty.
  std::vector<std::uint64_t> repetition_seeds;
};

struct RunRecord {
  Strategy strategy = Strategy::rcl;
  std::string variant;
  std::string method; // display label
  std::size_t repetition = 0;
  std::uint64_t seed = 0;
  std::optional<ContinualRun> run;
  std::string error; // non-empty iff the run failed
};

struct CellKey {
  std::string method;
  std::size_t task;
  auto operator<=>(const CellKey &) const = default;
};

struct ComparisonReport {
  std::vector<std::string> methods; // in run order
  std::vector<std::string> variants;
  std::vector<Strategy> strategies;
  std::size_t n_tasks = 0;
  std::vector<RunRecord> runs;
  std::map<CellKey, AggregateReport> cells;

  bool failed() const {
    return std::any_of(runs.begin(), runs.end(),
                       [](const RunRecord &r) { return !r.error.empty(); });
  }
};

inline std::uint64_t repetition_seed(std::uint64_t master, std::size_t r) {
  return derive_seed(master, "repetition/" + std::to_string(r));
}

inline std::string method_label(Strategy s, const std::string &variant,
                                bool multi_variant) {
  return multi_variant ? to_string(s) + "[" + variant + "]" : to_string(s);
}

/// Recomputes the mean/std cells from the successful runs.
inline void aggregate_cells(ComparisonReport &rep) {
  rep.cells.clear();
  std::map<CellKey, std::vector<MetricReport>> by_cell;
  for (const auto &r : rep.runs)
    if (r.run)
      for (const auto &t : r.run->tasks)
        by_cell[{r.method, t.task}].push_back(t.report);
  for (auto &[key, reports] : by_cell)
    rep.cells.emplace(key, aggregate(reports));
}

/// Runs each (strategy, variant) pair for R repetitions. Repetition r uses
/// run seed repetition_seed(master, r) for every strategy and variant, so
/// all rcl variants of one repetition train on the same pseudo data. A
/// failing run is recorded with its error and the rest still execute.
inline ComparisonReport compare_strategies(const TaskSequence &seq,
                                           const ComparisonConfig &cfg) {
  if (cfg.repetitions < 1)
    throw ConfigError("repetitions must be >= 1");
  if (!cfg.repetition_seeds.empty() &&
      cfg.repetition_seeds.size() != cfg.repetitions)
    throw ConfigError("repetition_seeds must list one seed per repetition");
  if (cfg.strategies.empty())
    throw ConfigError("no strategies selected");
  auto variants = cfg.variants;
  if (variants.empty())
    variants.push_back({"default", cfg.base.nets});
  const bool multi = variants.size() > 1;

  ComparisonReport rep;
  rep.n_tasks = seq.n_tasks();
  rep.strategies = cfg.strategies;
  for (const auto &v : variants)
    rep.variants.push_back(v.name);
  for (auto s : cfg.strategies)
    for (const auto &v : variants)
      rep.methods.push_back(method_label(s, v.name, multi));

  for (std::size_t r = 0; r < cfg.repetitions; ++r) {
    const auto seed = cfg.repetition_seeds.empty()
                          ? repetition_seed(cfg.master_seed, r)
                          : cfg.repetition_seeds[r];
    for (auto s : cfg.strategies)
      for (const auto &v : variants) {
        RunRecord rec;
        rec.strategy = s;
        rec.variant = v.name;
        rec.method = method_label(s, v.name, multi);
        rec.repetition = r;
        rec.seed = seed;
        ContinualConfig cc = cfg.base;
        cc.nets = v.nets;
        cc.seed = seed;
        try {
          rec.run = run_strategy(s, seq, cc);
        } catch (const Error &e) {
          rec.error = rec.method + " repetition " + std::to_string(r) + ": " +
                      e.what();
        }
        rep.runs.push_back(std::move(rec));
      }
  }
  aggregate_cells(rep);
  return rep;
}

} // namespace rcl
