#pragma once

// Per-class SMOTE generator: a bounded store of flattened windows, exact
// k-nearest-neighbor search inside it, and interpolation along neighbor
// segments to emit pseudo samples of the class.

#include <algorithm>
#include <cstdint>
#include <limits>
#include <numeric>
#include <optional>
#include <span>
#include <vector>

#include <json.hpp>

#include "rcl/common.hpp"
#include "rcl/data.hpp"

namespace rcl {

struct ClassGenerator {
  int class_id = 0;
  std::size_t window = 0;
  std::size_t channels = 0;
  std::vector<std::vector<double>> memory;
  std::size_t k = 5;
  std::uint64_t rng_seed = 0;

  std::size_t size() const { return memory.size(); }
  std::size_t effective_k() const {
    return memory.size() < 2 ? 0 : std::min(k, memory.size() - 1);
  }
};

struct GenerationRequest {
  std::size_t count = 1;
};

inline constexpr std::size_t unlimited_budget =
    std::numeric_limits<std::size_t>::max();

/// Stores the class's flattened windows. When there are more samples than
/// `memory_budget`, a seeded uniform subset of that size is kept (in the
/// original order).
inline ClassGenerator fit_generator(int class_id,
                                    std::span<const WindowedSample> samples,
                                    std::size_t k,
                                    std::size_t memory_budget,
                                    std::uint64_t seed) {
  if (samples.size() < 2)
    throw DataError("class " + std::to_string(class_id) +
                    " too small to generate: needs >= 2 samples, got " +
                    std::to_string(samples.size()));
  if (k < 1)
    throw ConfigError("generator k must be >= 1");
  if (memory_budget < 2)
    throw ConfigError("generator memory_budget must be >= 2");
  for (const auto &s : samples) {
    if (s.class_id != class_id)
      throw DataError("generator for class " + std::to_string(class_id) +
                      " received a sample labelled " +
                      std::to_string(s.class_id));
    if (s.size() != samples.front().size())
      throw DataError("inconsistent sample shapes in generator fit");
  }

  std::vector<std::size_t> keep(samples.size());
  std::iota(keep.begin(), keep.end(), std::size_t{0});
  if (samples.size() > memory_budget) {
    Rng rng(seed);
    std::shuffle(keep.begin(), keep.end(), rng);
    keep.resize(memory_budget);
    std::sort(keep.begin(), keep.end());
  }

  ClassGenerator g;
  g.class_id = class_id;
  g.window = samples.front().window;
  g.channels = samples.front().channels;
  g.k = k;
  g.rng_seed = seed;
  g.memory.reserve(keep.size());
  for (auto i : keep)
    g.memory.push_back(samples[i].features);
  return g;
}

inline ClassGenerator fit_generator(int class_id,
                                    std::span<const WindowedSample> samples,
                                    std::size_t k, std::uint64_t seed) {
  return fit_generator(class_id, samples, k, unlimited_budget, seed);
}

namespace detail {

inline double squared_distance(std::span<const double> a,
                               std::span<const double> b) {
  double d = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double e = a[i] - b[i];
    d += e * e;
  }
  return d;
}

} // namespace detail

/// Indices of the min(k, M-1) rows nearest to row `index` (Euclidean),
/// excluding the row itself. Ties go to the lower index.
inline std::vector<std::size_t> nearest_neighbors(const ClassGenerator &gen,
                                                  std::size_t index) {
  const std::size_t M = gen.memory.size();
  if (index >= M)
    throw DataError("neighbor query index " + std::to_string(index) +
                    " out of range for memory of size " + std::to_string(M));
  std::vector<std::pair<double, std::size_t>> d;
  d.reserve(M - 1);
  for (std::size_t j = 0; j < M; ++j)
    if (j != index)
      d.emplace_back(detail::squared_distance(gen.memory[index], gen.memory[j]),
                     j);
  const std::size_t kk = gen.effective_k();
  std::partial_sort(d.begin(), d.begin() + static_cast<std::ptrdiff_t>(kk),
                    d.end());
  std::vector<std::size_t> out(kk);
  for (std::size_t i = 0; i < kk; ++i)
    out[i] = d[i].second;
  return out;
}

/// Emits exactly `request.count` synthetic windows.
///
/// Memory row j gets quota floor(S/M), plus one for the first S mod M rows.
/// For each row one candidate point is drawn on each neighbor segment
/// (x_j + u (x_l - x_j), u ~ U[0,1]) and quota-many are picked without
/// replacement. A quota above the neighbor count instead samples segments
/// with replacement, drawing a fresh u per pick.
inline std::vector<WindowedSample> generate(const ClassGenerator &gen,
                                            GenerationRequest request,
                                            std::uint64_t seed) {
  if (request.count < 1)
    throw ConfigError("generation count must be >= 1");
  const std::size_t M = gen.memory.size();
  if (M < 2)
    throw DataError("generator for class " + std::to_string(gen.class_id) +
                    " is not fitted");
  const std::size_t S = request.count;
  const std::size_t base = S / M, extra = S % M;

  Rng rng(seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::vector<WindowedSample> out;
  out.reserve(S);

  auto emit = [&](std::size_t j, std::size_t l, double u) {
    const auto &xj = gen.memory[j];
    const auto &xl = gen.memory[l];
    WindowedSample s;
    s.window = gen.window;
    s.channels = gen.channels;
    s.class_id = gen.class_id;
    s.source = {Origin::synthetic, -1, j, static_cast<std::ptrdiff_t>(l)};
    s.features.resize(xj.size());
    for (std::size_t f = 0; f < xj.size(); ++f)
      s.features[f] = xj[f] + u * (xl[f] - xj[f]);
    out.push_back(std::move(s));
  };

  for (std::size_t j = 0; j < M; ++j) {
    const std::size_t quota = base + (j < extra ? 1 : 0);
    if (quota == 0)
      continue;
    const auto nb = nearest_neighbors(gen, j);
    if (quota <= nb.size()) {
      std::vector<double> u(nb.size());
      for (auto &v : u)
        v = unit(rng);
      std::vector<std::size_t> pick(nb.size());
      std::iota(pick.begin(), pick.end(), std::size_t{0});
      for (std::size_t q = 0; q < quota; ++q) {
        std::uniform_int_distribution<std::size_t> d(q, pick.size() - 1);
        std::swap(pick[q], pick[d(rng)]);
        emit(j, nb[pick[q]], u[pick[q]]);
      }
    } else {
      std::uniform_int_distribution<std::size_t> which(0, nb.size() - 1);
      for (std::size_t q = 0; q < quota; ++q) {
        const std::size_t l = which(rng);
        emit(j, nb[l], unit(rng));
      }
    }
  }
  return out;
}

inline std::vector<WindowedSample> generate(const ClassGenerator &gen,
                                            GenerationRequest request) {
  return generate(gen, request, gen.rng_seed);
}

// -------------------------------------------------------------------- JSON

inline void validate(const ClassGenerator &g) {
  if (g.memory.size() < 2)
    throw ParseError("generator memory must hold at least 2 vectors", 0);
  if (g.k < 1)
    throw ParseError("generator k must be >= 1", 0);
  const std::size_t d = g.memory.front().size();
  if (d == 0 || (g.window * g.channels != 0 && d != g.window * g.channels))
    throw ParseError("generator memory rows do not match window x channels",
                     0);
  for (const auto &row : g.memory) {
    if (row.size() != d)
      throw ParseError("generator memory rows differ in length", 0);
    for (double v : row)
      if (!std::isfinite(v))
        throw ParseError("generator memory holds a non-finite value", 0);
  }
}

inline void to_json(nlohmann::json &j, const ClassGenerator &g) {
  j = {{"class_id", g.class_id}, {"k", g.k},           {"seed", g.rng_seed},
       {"window", g.window},     {"channels", g.channels}, {"memory", g.memory}};
}

inline void from_json(const nlohmann::json &j, ClassGenerator &g) {
  try {
    g.class_id = j.at("class_id").get<int>();
    g.k = j.at("k").get<std::size_t>();
    g.rng_seed = j.at("seed").get<std::uint64_t>();
    g.window = j.value("window", std::size_t{0});
    g.channels = j.value("channels", std::size_t{0});
    j.at("memory").get_to(g.memory);
  } catch (const nlohmann::json::exception &e) {
    throw ParseError(std::string("generator document: ") + e.what(), 0);
  }
  if (g.window * g.channels == 0 && !g.memory.empty()) {
    g.window = g.memory.front().size();
    g.channels = 1;
  }
  validate(g);
}

} // namespace rcl
