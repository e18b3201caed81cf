#pragma once

// CSV and Markdown renderings of comparison results. Values are stored at
// full precision; rounding to 3 decimals happens only in the Markdown.

#include <charconv>
#include <cmath>
#include <cstdio>
#include <sstream>
#include <string>
#include <vector>

#include "rcl/continual.hpp"
#include "rcl/eval.hpp"

namespace rcl::report {

/// Shortest decimal that round-trips to the same double.
inline std::string full(double v) {
  char buf[64];
  auto [p, ec] = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, p);
}

inline std::string fixed3(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.3f", v);
  return buf;
}

inline std::string whole(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.0f", v);
  return buf;
}

/// "0.786 (0.008)"
inline std::string cell(double mean, double std) {
  return fixed3(mean) + " (" + fixed3(std) + ")";
}

inline constexpr const char *metrics_header =
    "method,task,repetition,class,precision,recall,f";

/// Per-class rows followed by one "macro" row for a single evaluation.
inline void append_metric_rows(std::vector<std::string> &rows,
                               const std::string &method, std::size_t task,
                               std::size_t repetition, const MetricReport &r) {
  const std::string prefix = method + "," + std::to_string(task) + "," +
                             std::to_string(repetition) + ",";
  for (std::size_t c = 0; c < r.f.size(); ++c)
    rows.push_back(prefix + std::to_string(c) + "," + full(r.precision[c]) +
                   "," + full(r.recall[c]) + "," + full(r.f[c]));
  rows.push_back(prefix + "macro," + full(r.macro_precision) + "," +
                 full(r.macro_recall) + "," + full(r.macro_f));
}

/// Row range [first, last] (1-based data rows) each run occupies.
struct RowSpan {
  std::size_t first = 0, last = 0;
};

struct MetricsTable {
  std::vector<std::string> rows; // without header
  std::vector<RowSpan> spans;    // parallel to ComparisonReport::runs

  std::string csv() const {
    std::string out = std::string(metrics_header) + "\n";
    for (const auto &r : rows)
      out += r + "\n";
    return out;
  }
};

inline MetricsTable metrics_table(const ComparisonReport &rep) {
  MetricsTable t;
  for (const auto &run : rep.runs) {
    RowSpan span{t.rows.size() + 1, t.rows.size()};
    if (run.run)
      for (const auto &task : run.run->tasks)
        append_metric_rows(t.rows, run.method, task.task, run.repetition,
                           task.report);
    span.last = t.rows.size();
    t.spans.push_back(span);
  }
  return t;
}

namespace detail {

inline const AggregateReport *find(const ComparisonReport &rep,
                                   const std::string &method,
                                   std::size_t task) {
  auto it = rep.cells.find({method, task});
  return it == rep.cells.end() ? nullptr : &it->second;
}

inline void prf_cells(std::ostringstream &os, const AggregateReport *a) {
  if (!a) {
    os << " FAILED | FAILED | FAILED |";
    return;
  }
  os << ' ' << cell(a->mean.macro_precision, a->std.macro_precision) << " | "
     << cell(a->mean.macro_recall, a->std.macro_recall) << " | "
     << cell(a->mean.macro_f, a->std.macro_f) << " |";
}

} // namespace detail

/// Method rows x task column groups x {precision, recall, F-score}.
inline std::string task_table(const ComparisonReport &rep) {
  std::ostringstream os;
  os << "| Method |";
  for (std::size_t t = 1; t <= rep.n_tasks; ++t)
    os << " Task " << t << " Precision | Task " << t << " Recall | Task " << t
       << " F-score |";
  os << "\n|---|";
  for (std::size_t t = 1; t <= rep.n_tasks; ++t)
    os << "---|---|---|";
  os << "\n";
  for (const auto &m : rep.methods) {
    os << "| " << m << " |";
    for (std::size_t t = 1; t <= rep.n_tasks; ++t)
      detail::prf_cells(os, detail::find(rep, m, t));
    os << "\n";
  }
  return os.str();
}

/// Strategy rows x classifier column groups, final task only.
inline std::string classifier_table(const ComparisonReport &rep) {
  std::ostringstream os;
  os << "| Method |";
  for (const auto &v : rep.variants)
    os << ' ' << v << " Precision | " << v << " Recall | " << v
       << " F-score |";
  os << "\n|---|";
  for (std::size_t i = 0; i < rep.variants.size(); ++i)
    os << "---|---|---|";
  os << "\n";
  const bool multi = rep.variants.size() > 1;
  for (auto s : rep.strategies) {
    os << "| " << to_string(s) << " |";
    for (const auto &v : rep.variants)
      detail::prf_cells(
          os, detail::find(rep, method_label(s, v, multi), rep.n_tasks));
    os << "\n";
  }
  return os.str();
}

/// Micro accuracy (trace / total) per method and task, mean (std).
inline std::string accuracy_table(const ComparisonReport &rep) {
  std::ostringstream os;
  os << "| Method |";
  for (std::size_t t = 1; t <= rep.n_tasks; ++t)
    os << " Task " << t << " accuracy |";
  os << "\n|---|";
  for (std::size_t t = 1; t <= rep.n_tasks; ++t)
    os << "---|";
  os << "\n";
  for (const auto &m : rep.methods) {
    os << "| " << m << " |";
    for (std::size_t t = 1; t <= rep.n_tasks; ++t) {
      std::vector<double> acc;
      for (const auto &r : rep.runs)
        if (r.method == m && r.run && r.run->tasks.size() >= t)
          acc.push_back(r.run->tasks[t - 1].cm.accuracy());
      if (acc.empty()) {
        os << " FAILED |";
        continue;
      }
      double mean = 0, var = 0;
      for (double a : acc)
        mean += a;
      mean /= static_cast<double>(acc.size());
      for (double a : acc)
        var += (a - mean) * (a - mean);
      os << ' ' << cell(mean, std::sqrt(var / static_cast<double>(acc.size())))
         << " |";
    }
    os << "\n";
  }
  return os.str();
}

/// Replay volume, raw storage and spread across ensemble members.
inline std::string storage_table(const ComparisonReport &rep) {
  std::ostringstream os;
  os << "| Method | Synthetic samples per run | Raw vectors retained | "
        "Member F-score std (final task) |\n|---|---|---|---|\n";
  for (const auto &m : rep.methods) {
    double synth = 0, raw = 0, spread = 0;
    std::size_t n = 0;
    for (const auto &r : rep.runs) {
      if (r.method != m || !r.run)
        continue;
      ++n;
      for (auto c : r.run->replay_counts)
        synth += static_cast<double>(c);
      raw += static_cast<double>(r.run->memory_footprint);
      const auto &members = r.run->tasks.back().member_reports;
      spread += aggregate(members).std.macro_f;
    }
    if (n == 0) {
      os << "| " << m << " | FAILED | FAILED | FAILED |\n";
      continue;
    }
    const double k = static_cast<double>(n);
    os << "| " << m << " | " << whole(synth / k) << " | " << whole(raw / k)
       << " | " << fixed3(spread / k) << " |\n";
  }
  return os.str();
}

inline std::string markdown(const ComparisonReport &rep,
                            std::size_t repetitions) {
  std::ostringstream os;
  os << "# Class-incremental comparison\n\n"
     << "Macro-averaged precision, recall and F-score over " << repetitions
     << " repetition(s); values in parentheses are population standard "
        "deviations across repetitions.\n\n";
  os << "## Per-task results\n\n" << task_table(rep) << "\n";
  if (rep.variants.size() > 1)
    os << "## Final task by classifier\n\n" << classifier_table(rep) << "\n";
  os << "## Micro accuracy\n\n" << accuracy_table(rep) << "\n";
  os << "## Replay and storage\n\n" << storage_table(rep) << "\n";
  if (rep.failed()) {
    os << "## FAILED runs\n\n";
    for (const auto &r : rep.runs)
      if (!r.error.empty())
        os << "- FAILED " << r.error << "\n";
    os << "\n";
  }
  return os.str();
}

} // namespace rcl::report
