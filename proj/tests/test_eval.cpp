#include <gtest/gtest.h>

#include <numeric>
#include <random>

#include "oracles.hpp"
#include "rcl/eval.hpp"

using namespace rcl;

namespace {

ConfusionMatrix matrix(std::size_t n, std::vector<std::size_t> counts) {
  return ConfusionMatrix{n, std::move(counts)};
}

} // namespace

TEST(Confusion, PerfectIsDiagonal) {
  const std::vector<int> y{0, 1, 2, 2, 1};
  const auto cm = confusion(y, y, 3);
  EXPECT_EQ(cm.counts, (std::vector<std::size_t>{1, 0, 0, 0, 2, 0, 0, 0, 2}));
}

TEST(Confusion, AllPredictedZeroFillsFirstColumn) {
  const std::vector<int> y{0, 1, 1, 2}, p(4, 0);
  const auto cm = confusion(y, p, 3);
  EXPECT_EQ(cm.counts, (std::vector<std::size_t>{1, 0, 0, 2, 0, 0, 1, 0, 0}));
}

TEST(Confusion, MatchesTally) {
  std::mt19937_64 rng(1);
  for (int rep = 0; rep < 100; ++rep) {
    const std::size_t n = 2 + rng() % 6, len = rng() % 300;
    std::vector<int> y(len), p(len);
    for (std::size_t i = 0; i < len; ++i) {
      y[i] = static_cast<int>(rng() % n);
      p[i] = static_cast<int>(rng() % n);
    }
    const auto cm = confusion(y, p, n);
    const auto t = oracle::tally(y, p);
    EXPECT_EQ(cm.total(), len);
    for (std::size_t a = 0; a < n; ++a)
      for (std::size_t b = 0; b < n; ++b) {
        auto it = t.find({int(a), int(b)});
        EXPECT_EQ(cm.at(a, b), it == t.end() ? 0u : it->second);
      }
  }
}

TEST(Confusion, BadInputsAreErrors) {
  const std::vector<int> a{0, 1}, b{0}, c{0, 3};
  EXPECT_THROW(confusion(a, b, 2), DataError);
  EXPECT_THROW(confusion(a, c, 2), DataError);
}

TEST(Metrics, DiagonalIsPerfect) {
  const auto r = metrics(matrix(3, {4, 0, 0, 0, 1, 0, 0, 0, 9}));
  EXPECT_EQ(r.macro_precision, 1.0);
  EXPECT_EQ(r.macro_recall, 1.0);
  EXPECT_EQ(r.macro_f, 1.0);
  EXPECT_FALSE(r.undefined);
}

TEST(Metrics, TwoClassWorkedExample) {
  const auto r = metrics(matrix(2, {1, 1, 0, 2}));
  EXPECT_DOUBLE_EQ(r.precision[0], 1.0);
  EXPECT_DOUBLE_EQ(r.precision[1], 2.0 / 3.0);
  EXPECT_DOUBLE_EQ(r.recall[0], 0.5);
  EXPECT_DOUBLE_EQ(r.recall[1], 1.0);
  EXPECT_DOUBLE_EQ(r.macro_precision, 5.0 / 6.0);
  EXPECT_DOUBLE_EQ(r.macro_recall, 0.75);
  EXPECT_DOUBLE_EQ(r.macro_f, (2.0 / 3.0 + 0.8) / 2.0);
  EXPECT_NEAR(r.macro_f, 0.7333, 1e-4);
}

TEST(Metrics, EmptyColumnSetsWarning) {
  const auto r = metrics(matrix(2, {3, 0, 2, 0}));
  EXPECT_TRUE(r.undefined);
  EXPECT_EQ(r.precision[1], 0.0);
  EXPECT_EQ(r.f[1], 0.0);
}

TEST(Metrics, AllZeroIsError) {
  EXPECT_THROW(metrics(matrix(2, {0, 0, 0, 0})), DataError);
}

TEST(Metrics, MatchesDefinitionOracle) {
  std::mt19937_64 rng(2);
  for (int rep = 0; rep < 300; ++rep) {
    const std::size_t n = 2 + rng() % 5;
    std::vector<std::size_t> c(n * n);
    for (auto &v : c)
      v = rng() % 4 == 0 ? 0 : rng() % 50;
    c[0] += 1;
    const auto cm = matrix(n, c);
    const auto r = metrics(cm);
    const auto o = oracle::scores(cm);
    for (std::size_t k = 0; k < n; ++k) {
      EXPECT_NEAR(r.precision[k], o.p[k], 1e-12);
      EXPECT_NEAR(r.recall[k], o.r[k], 1e-12);
      EXPECT_NEAR(r.f[k], o.f[k], 1e-12);
    }
    EXPECT_NEAR(r.macro_f, o.macro_f, 1e-12);
    for (double v : {r.macro_precision, r.macro_recall, r.macro_f}) {
      EXPECT_GE(v, 0.0);
      EXPECT_LE(v, 1.0);
    }
  }
}

TEST(Metrics, PermutationInvariantMacro) {
  const std::vector<std::size_t> c{5, 1, 2, 0, 7, 3, 4, 1, 6};
  std::vector<std::size_t> perm{2, 0, 1};
  std::vector<std::size_t> pc(9);
  for (std::size_t a = 0; a < 3; ++a)
    for (std::size_t b = 0; b < 3; ++b)
      pc[perm[a] * 3 + perm[b]] = c[a * 3 + b];
  const auto r = metrics(matrix(3, c)), q = metrics(matrix(3, pc));
  EXPECT_NEAR(r.macro_precision, q.macro_precision, 1e-15);
  EXPECT_NEAR(r.macro_recall, q.macro_recall, 1e-15);
  EXPECT_NEAR(r.macro_f, q.macro_f, 1e-15);
}

TEST(Metrics, BalancedRowsMacroRecallIsAccuracy) {
  const auto cm = matrix(3, {8, 1, 1, 2, 6, 2, 0, 3, 7});
  EXPECT_NEAR(metrics(cm).macro_recall, cm.accuracy(), 1e-15);
}

TEST(Aggregate, SingleReportHasZeroStd) {
  const auto r = metrics(matrix(2, {1, 1, 0, 2}));
  const std::vector<MetricReport> one{r};
  const auto a = aggregate(one);
  EXPECT_EQ(a.count, 1u);
  EXPECT_EQ(a.mean.macro_f, r.macro_f);
  EXPECT_EQ(a.std.macro_f, 0.0);
}

TEST(Aggregate, TwoValueExample) {
  MetricReport a, b;
  a.f = a.precision = a.recall = {0.7};
  b.f = b.precision = b.recall = {0.9};
  a.macro_f = 0.7;
  b.macro_f = 0.9;
  const std::vector<MetricReport> v{a, b};
  const auto g = aggregate(v);
  EXPECT_NEAR(g.mean.macro_f, 0.8, 1e-15);
  EXPECT_NEAR(g.std.macro_f, 0.1, 1e-15);
  EXPECT_NEAR(g.std.f[0], 0.1, 1e-15);
}

TEST(Aggregate, MatchesTwoPassMoments) {
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> u(0, 1);
  std::vector<MetricReport> reps;
  std::vector<double> f;
  for (int i = 0; i < 5; ++i) {
    MetricReport r;
    r.precision = r.recall = r.f = {u(rng), u(rng)};
    r.macro_precision = r.macro_recall = r.macro_f = u(rng);
    f.push_back(r.macro_f);
    reps.push_back(r);
  }
  const auto g = aggregate(reps);
  const auto [m, sd] = oracle::moments(f);
  EXPECT_NEAR(g.mean.macro_f, m, 1e-12);
  EXPECT_NEAR(g.std.macro_f, sd, 1e-12);
}

TEST(Aggregate, EmptyIsError) {
  std::vector<MetricReport> none;
  EXPECT_THROW(aggregate(none), DataError);
}
