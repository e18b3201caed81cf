#pragma once

#include <algorithm>
#include <cmath>
#include <span>
#include <string>
#include <vector>

#include "rcl/common.hpp"

namespace rcl {

/// Rows are the true class, columns the predicted class.
struct ConfusionMatrix {
  std::size_t n_classes = 0;
  std::vector<std::size_t> counts;

  std::size_t at(std::size_t truth, std::size_t pred) const {
    return counts[truth * n_classes + pred];
  }
  std::size_t total() const {
    std::size_t s = 0;
    for (auto c : counts)
      s += c;
    return s;
  }
  double accuracy() const {
    std::size_t diag = 0;
    for (std::size_t c = 0; c < n_classes; ++c)
      diag += at(c, c);
    return static_cast<double>(diag) / static_cast<double>(total());
  }
  bool operator==(const ConfusionMatrix &) const = default;
};

struct MetricReport {
  std::vector<double> precision, recall, f;
  double macro_precision = 0, macro_recall = 0, macro_f = 0;
  /// Set when some per-class value hit 0/0 and was defined as 0.
  bool undefined = false;
};

inline ConfusionMatrix confusion(std::span<const int> truth,
                                 std::span<const int> pred,
                                 std::size_t n_classes) {
  if (truth.size() != pred.size())
    throw DataError("true and predicted label lists differ in length");
  if (n_classes < 1)
    throw DataError("confusion matrix needs at least one class");
  ConfusionMatrix cm{n_classes, std::vector<std::size_t>(n_classes * n_classes)};
  for (std::size_t i = 0; i < truth.size(); ++i) {
    if (truth[i] < 0 || pred[i] < 0 ||
        static_cast<std::size_t>(truth[i]) >= n_classes ||
        static_cast<std::size_t>(pred[i]) >= n_classes)
      throw DataError("label out of range at position " + std::to_string(i));
    ++cm.counts[static_cast<std::size_t>(truth[i]) * n_classes +
                static_cast<std::size_t>(pred[i])];
  }
  return cm;
}

/// Per-class precision/recall/F and their unweighted (macro) means.
inline MetricReport metrics(const ConfusionMatrix &cm) {
  const std::size_t n = cm.n_classes;
  if (n == 0 || cm.total() == 0)
    throw DataError("cannot compute metrics from an empty confusion matrix");
  MetricReport r;
  r.precision.resize(n);
  r.recall.resize(n);
  r.f.resize(n);
  auto ratio = [&r](double num, double den) {
    if (den == 0) {
      r.undefined = true;
      return 0.0;
    }
    return num / den;
  };
  for (std::size_t c = 0; c < n; ++c) {
    std::size_t row = 0, col = 0;
    for (std::size_t o = 0; o < n; ++o) {
      row += cm.at(c, o);
      col += cm.at(o, c);
    }
    const double tp = static_cast<double>(cm.at(c, c));
    r.precision[c] = ratio(tp, static_cast<double>(col));
    r.recall[c] = ratio(tp, static_cast<double>(row));
    r.f[c] = ratio(2 * r.precision[c] * r.recall[c],
                   r.precision[c] + r.recall[c]);
    r.macro_precision += r.precision[c];
    r.macro_recall += r.recall[c];
    r.macro_f += r.f[c];
  }
  r.macro_precision /= static_cast<double>(n);
  r.macro_recall /= static_cast<double>(n);
  r.macro_f /= static_cast<double>(n);
  return r;
}

struct AggregateReport {
  MetricReport mean;
  MetricReport std; // population standard deviation
  std::size_t count = 0;
};

/// Elementwise mean and population std (Welford) over reports.
inline AggregateReport aggregate(std::span<const MetricReport> reports) {
  if (reports.empty())
    throw DataError("cannot aggregate an empty report list");
  const std::size_t n = reports.front().f.size();
  for (const auto &r : reports)
    if (r.f.size() != n)
      throw DataError("reports disagree on class count");

  auto flat = [](const MetricReport &r) {
    std::vector<double> v;
    v.insert(v.end(), r.precision.begin(), r.precision.end());
    v.insert(v.end(), r.recall.begin(), r.recall.end());
    v.insert(v.end(), r.f.begin(), r.f.end());
    v.push_back(r.macro_precision);
    v.push_back(r.macro_recall);
    v.push_back(r.macro_f);
    return v;
  };
  auto unflat = [n](const std::vector<double> &v) {
    MetricReport r;
    auto it = v.begin();
    auto take = [&it, n] {
      std::vector<double> out(it, it + static_cast<std::ptrdiff_t>(n));
      it += static_cast<std::ptrdiff_t>(n);
      return out;
    };
    r.precision = take();
    r.recall = take();
    r.f = take();
    r.macro_precision = it[0];
    r.macro_recall = it[1];
    r.macro_f = it[2];
    return r;
  };

  const std::size_t d = 3 * n + 3;
  std::vector<double> mean(d, 0.0), m2(d, 0.0);
  std::size_t k = 0;
  bool undefined = false;
  for (const auto &r : reports) {
    ++k;
    const auto x = flat(r);
    for (std::size_t i = 0; i < d; ++i) {
      const double delta = x[i] - mean[i];
      mean[i] += delta / static_cast<double>(k);
      m2[i] += delta * (x[i] - mean[i]);
    }
    undefined = undefined || r.undefined;
  }
  for (auto &v : m2)
    v = std::sqrt(std::max(0.0, v / static_cast<double>(k)));
  AggregateReport a{unflat(mean), unflat(m2), k};
  a.mean.undefined = undefined;
  return a;
}

} // namespace rcl
