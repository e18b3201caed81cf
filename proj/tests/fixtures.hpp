#pragma once

#include <algorithm>
#include <cmath>

#include "rcl/continual.hpp"

namespace fixture {

/// Default synthetic stream, window 50, trial 1 trains, trials 2-5 test.
inline rcl::TaskSequence default_sequence(std::uint64_t seed = 2024) {
  auto cfg = rcl::default_synthetic_config();
  cfg.seed = seed;
  const auto trials = rcl::synthesize_stream(cfg);
  const std::vector<int> order{0, 1, 2}, train{1};
  return rcl::make_task_sequence(trials, order, 50, 50, train);
}

/// Small, noisy 3-class stream used for the EWC freezing check.
inline rcl::TaskSequence toy_sequence() {
  rcl::SyntheticStreamConfig cfg;
  cfg.trial_length = 400;
  cfg.trials_per_class = 2;
  cfg.seed = 5;
  cfg.classes = {{{0, 0}, 1, 0.0137, 4},
                 {{1, 1}, 1, 0.0291, 4},
                 {{2, 2}, 1, 0.0419, 4}};
  const auto trials = rcl::synthesize_stream(cfg);
  const std::vector<int> order{0, 1, 2}, train{1};
  return rcl::make_task_sequence(trials, order, 10, 10, train);
}

inline rcl::ContinualConfig fast_config(std::size_t epochs = 30,
                                        std::uint64_t seed = 1) {
  rcl::ContinualConfig c;
  c.train.epochs = epochs;
  c.seed = seed;
  return c;
}

inline rcl::ContinualConfig toy_config() {
  auto c = fast_config(5, 1);
  c.nets.front().hidden = {8, 8};
  c.ensemble_size = 2;
  return c;
}

/// Largest change of any parameter that exists both before and after the
/// head was extended from `before` to `after`.
inline double shared_movement(const rcl::NetModel &before,
                              const rcl::NetModel &after) {
  const auto ext = rcl::extend_head(before, after.spec.n_classes, 0);
  double worst = 0;
  for (std::size_t j = 0; j < ext.old_index.size(); ++j)
    if (ext.old_index[j] >= 0)
      worst = std::max(worst,
                       std::abs(after.params[j] -
                                before.params[static_cast<std::size_t>(
                                    ext.old_index[j])]));
  return worst;
}

inline bool same_params(const rcl::Ensemble &a, const rcl::Ensemble &b) {
  if (a.members.size() != b.members.size())
    return false;
  for (std::size_t m = 0; m < a.members.size(); ++m)
    if (a.members[m].params != b.members[m].params)
      return false;
  return a.standardizer.mean == b.standardizer.mean &&
         a.standardizer.std == b.standardizer.std;
}

} // namespace fixture
