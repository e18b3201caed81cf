#include <gtest/gtest.h>

#include <cmath>
#include <map>
#include <random>
#include <set>

#include "oracles.hpp"
#include "rcl/generator.hpp"

using namespace rcl;

namespace {

std::vector<WindowedSample> samples_of(const std::vector<std::vector<double>> &rows,
                                       int cls = 0) {
  std::vector<WindowedSample> out;
  for (std::size_t i = 0; i < rows.size(); ++i) {
    WindowedSample s;
    s.window = rows[i].size();
    s.channels = 1;
    s.features = rows[i];
    s.class_id = cls;
    s.source = {Origin::raw, 1, i, -1};
    out.push_back(std::move(s));
  }
  return out;
}

std::vector<std::vector<double>> gaussian_rows(std::size_t M, std::size_t D,
                                               std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> n(0.0, 1.0);
  std::vector<std::vector<double>> rows(M, std::vector<double>(D));
  for (auto &r : rows)
    for (auto &v : r)
      v = n(rng);
  return rows;
}

} // namespace

TEST(FitGenerator, KeepsAllWithinBudget) {
  const auto s = samples_of(gaussian_rows(125, 4, 1));
  const auto g = fit_generator(0, s, 5, 125, 9);
  ASSERT_EQ(g.memory.size(), 125u);
  for (std::size_t i = 0; i < 125; ++i)
    EXPECT_EQ(g.memory[i], s[i].features);
}

TEST(FitGenerator, BudgetSubsetIsReproducible) {
  const auto s = samples_of(gaussian_rows(125, 4, 1));
  const auto a = fit_generator(0, s, 5, 40, 9);
  const auto b = fit_generator(0, s, 5, 40, 9);
  ASSERT_EQ(a.memory.size(), 40u);
  EXPECT_EQ(a.memory, b.memory);
  // Every kept row is an original row, in original order.
  std::size_t cursor = 0;
  for (const auto &row : a.memory) {
    while (cursor < s.size() && s[cursor].features != row)
      ++cursor;
    ASSERT_LT(cursor, s.size());
    ++cursor;
  }
  EXPECT_NE(fit_generator(0, s, 5, 40, 10).memory, a.memory);
}

TEST(FitGenerator, SingleSampleIsError) {
  const auto s = samples_of({{1.0, 2.0}});
  try {
    fit_generator(3, s, 5, 0);
    FAIL();
  } catch (const DataError &e) {
    EXPECT_NE(std::string(e.what()).find("too small to generate"),
              std::string::npos);
  }
}

TEST(FitGenerator, MixedLabelsIsError) {
  auto s = samples_of({{1.0}, {2.0}, {3.0}});
  s[1].class_id = 1;
  EXPECT_THROW(fit_generator(0, s, 5, 0), DataError);
}

TEST(Neighbors, ScalarExample) {
  const auto g = fit_generator(0, samples_of({{0}, {1}, {3}, {7}}), 2, 0);
  EXPECT_EQ(nearest_neighbors(g, 0), (std::vector<std::size_t>{1, 2}));
}

TEST(Neighbors, KClampedToAllOthers) {
  const auto g = fit_generator(0, samples_of({{0}, {1}, {3}, {7}}), 10, 0);
  EXPECT_EQ(g.effective_k(), 3u);
  EXPECT_EQ(nearest_neighbors(g, 3), (std::vector<std::size_t>{2, 1, 0}));
}

TEST(Neighbors, TiesGoToLowerIndex) {
  const auto g = fit_generator(0, samples_of({{0}, {1}, {-1}, {1}}), 2, 0);
  EXPECT_EQ(nearest_neighbors(g, 0), (std::vector<std::size_t>{1, 2}));
}

TEST(Neighbors, MatchesBruteForce) {
  const auto rows = gaussian_rows(200, 100, 4);
  const auto g = fit_generator(0, samples_of(rows), 7, 0);
  for (std::size_t q = 0; q < rows.size(); ++q)
    ASSERT_EQ(nearest_neighbors(g, q), oracle::neighbors(rows, q, 7)) << q;
}

TEST(Neighbors, OutOfRangeIsError) {
  const auto g = fit_generator(0, samples_of({{0}, {1}}), 1, 0);
  EXPECT_THROW(nearest_neighbors(g, 2), DataError);
}

TEST(Generate, TwoPointDiagonal) {
  const auto g = fit_generator(0, samples_of({{0, 0}, {1, 1}}), 1, 0);
  const auto out = generate(g, {2}, 77);
  ASSERT_EQ(out.size(), 2u);
  for (const auto &s : out) {
    EXPECT_EQ(s.features[0], s.features[1]);
    EXPECT_GE(s.features[0], 0.0);
    EXPECT_LE(s.features[0], 1.0);
    EXPECT_EQ(s.source.origin, Origin::synthetic);
  }
}

TEST(Generate, IdenticalMemoryGivesCopies) {
  const auto g = fit_generator(0, samples_of({{2, -1}, {2, -1}, {2, -1}}), 2, 0);
  for (const auto &s : generate(g, {17}, 3))
    EXPECT_EQ(s.features, (std::vector<double>{2, -1}));
}

TEST(Generate, OneCandidatePerSegment) {
  // Center point with three neighbors; quota 3 per row draws each segment
  // exactly once.
  const auto g = fit_generator(
      0, samples_of({{0, 0}, {1, 0}, {0, 1}, {-1, -1}}), 3, 0);
  const auto out = generate(g, {12}, 5);
  std::map<std::size_t, std::multiset<std::ptrdiff_t>> partners;
  for (const auto &s : out)
    partners[s.source.start].insert(s.source.partner);
  ASSERT_EQ(partners.size(), 4u);
  for (const auto &[row, ps] : partners) {
    const auto nn = nearest_neighbors(g, row);
    EXPECT_EQ(ps, std::multiset<std::ptrdiff_t>(nn.begin(), nn.end())) << row;
  }
}

TEST(Generate, QuotaAboveKRepeatsSegments) {
  const auto rows = std::vector<std::vector<double>>{{0, 0}, {4, 1}, {-2, 3}};
  const auto g = fit_generator(0, samples_of(rows), 1, 0);
  const auto out = generate(g, {30}, 8);
  ASSERT_EQ(out.size(), 30u);
  std::map<std::size_t, std::size_t> per_row;
  for (const auto &s : out) {
    ++per_row[s.source.start];
    const auto &a = rows[s.source.start];
    const auto &b = rows[static_cast<std::size_t>(s.source.partner)];
    EXPECT_GE(oracle::segment_parameter(s.features, a, b, 1e-12), 0.0);
  }
  for (const auto &[row, n] : per_row)
    EXPECT_EQ(n, 10u);
}

TEST(Generate, CountZeroIsError) {
  const auto g = fit_generator(0, samples_of({{0}, {1}}), 1, 0);
  EXPECT_THROW(generate(g, {0}, 1), ConfigError);
}

TEST(Generate, RandomizedSegmentAndCountProperties) {
  std::mt19937_64 rng(21);
  for (int rep = 0; rep < 30; ++rep) {
    const std::size_t D = 2 + rng() % 20, M = 2 + rng() % 40,
                      k = 1 + rng() % 10, S = 1 + rng() % 200;
    const auto rows = gaussian_rows(M, D, rng());
    const auto g = fit_generator(2, samples_of(rows, 2), k, rng());
    const auto out = generate(g, {S});
    ASSERT_EQ(out.size(), S);
    std::vector<std::size_t> per_row(M, 0);
    for (const auto &s : out) {
      EXPECT_EQ(s.class_id, 2);
      const std::size_t j = s.source.start;
      ++per_row[j];
      const auto nn = oracle::neighbors(rows, j, k);
      const auto l = static_cast<std::size_t>(s.source.partner);
      EXPECT_NE(std::find(nn.begin(), nn.end(), l), nn.end());
      EXPECT_GE(oracle::segment_parameter(s.features, rows[j], rows[l], 1e-9),
                0.0);
      for (std::size_t f = 0; f < D; ++f) {
        double lo = rows[0][f], hi = rows[0][f];
        for (const auto &r : rows) {
          lo = std::min(lo, r[f]);
          hi = std::max(hi, r[f]);
        }
        EXPECT_GE(s.features[f], lo - 1e-12);
        EXPECT_LE(s.features[f], hi + 1e-12);
      }
    }
    for (std::size_t j = 0; j < M; ++j)
      EXPECT_EQ(per_row[j], S / M + (j < S % M ? 1 : 0));
    const auto again = generate(g, {S});
    for (std::size_t i = 0; i < S; ++i)
      EXPECT_EQ(again[i].features, out[i].features);
  }
}

TEST(Generate, DistributionSanity) {
  const std::size_t M = 200, D = 5;
  const auto rows = gaussian_rows(M, D, 99);
  const auto g = fit_generator(0, samples_of(rows), 5, 0);
  const auto out = generate(g, {10 * M}, 1);
  for (std::size_t f = 0; f < D; ++f) {
    std::vector<double> mem, syn;
    for (const auto &r : rows)
      mem.push_back(r[f]);
    for (const auto &s : out)
      syn.push_back(s.features[f]);
    const auto [m_mem, sd_mem] = oracle::moments(mem);
    const auto [m_syn, sd_syn] = oracle::moments(syn);
    EXPECT_LT(std::abs(m_syn - m_mem), 3 * sd_mem / std::sqrt(double(M))) << f;
    EXPECT_LE(sd_syn * sd_syn, sd_mem * sd_mem) << f;
  }
}

TEST(GeneratorJson, RoundTripAndValidation) {
  const auto g = fit_generator(1, samples_of(gaussian_rows(6, 3, 2), 1), 4, 31);
  nlohmann::json j = g;
  auto back = j.get<ClassGenerator>();
  EXPECT_EQ(back.memory, g.memory);
  EXPECT_EQ(back.k, g.k);
  EXPECT_EQ(back.rng_seed, g.rng_seed);
  EXPECT_NO_THROW(validate(back));
  EXPECT_EQ(generate(back, {9}).size(), 9u);

  back.memory.resize(1);
  EXPECT_THROW(validate(back), ParseError);
  nlohmann::json bad = j;
  bad["memory"][2][1] = "x";
  EXPECT_THROW(bad.get<ClassGenerator>(), ParseError);
}
