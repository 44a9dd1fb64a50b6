#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include "samcl/core/errors.hpp"

namespace samcl {

enum class MetricKind { dice_up, tre_down_mm };

inline std::string to_string(MetricKind kind) { return kind == MetricKind::dice_up ? "dice_up" : "tre_down_mm"; }

inline MetricKind parse_metric_kind(const std::string& s) {
  if (s == "dice_up") return MetricKind::dice_up;
  if (s == "tre_down_mm") return MetricKind::tre_down_mm;
  throw ConfigError("unknown metric kind '" + s + "'");
}

/// True when `a` is at least as good as `b` under `kind`.
inline bool no_worse(MetricKind kind, double a, double b) { return kind == MetricKind::dice_up ? a >= b : a <= b; }

/// Mean metric on one test set plus the per-pair values behind it.
struct TaskScore {
  double mean = 0;
  std::vector<double> per_pair;

  friend bool operator==(const TaskScore&, const TaskScore&) = default;
};

/// How the rows of a result matrix were produced.
enum class MatrixKind {
  continual,    // one model trained through the stream; row i after task i
  independent,  // row i is a fresh model trained on task i only
  static_model  // one model for every row (untrained or multi-task)
};

/// R[i][j]: metric on task j after training through task i.
struct ResultMatrix {
  std::vector<MetricKind> metric_kind;
  std::vector<std::vector<TaskScore>> rows;
  MatrixKind kind = MatrixKind::continual;

  [[nodiscard]] std::size_t tasks() const noexcept { return metric_kind.size(); }
  [[nodiscard]] double at(std::size_t i, std::size_t j) const { return rows.at(i).at(j).mean; }
  /// Upper-triangle entries measure a task before the model has trained on it.
  [[nodiscard]] static bool zero_shot(std::size_t i, std::size_t j) noexcept { return j > i; }

  void validate() const {
    if (rows.size() != tasks()) throw ConfigError("result matrix: expected " + std::to_string(tasks()) + " rows");
    for (const auto& row : rows) {
      if (row.size() != tasks()) throw ConfigError("result matrix: ragged row");
    }
  }
};

struct SummaryReport {
  std::vector<double> avg;
  std::vector<double> bwt;
  bool bwt_defined = true;  // false for strategies without a training sequence
};

/// AVG_i = R[T,i] and BWT_i = R[T,i] - R[i,i]. Independent models report their own
/// diagonal as AVG. BWT_T is 0 by construction.
inline SummaryReport compute_summary(const ResultMatrix& r) {
  r.validate();
  const std::size_t t = r.tasks();
  SummaryReport out;
  out.bwt_defined = r.kind == MatrixKind::continual;
  for (std::size_t i = 0; i < t; ++i) {
    const double final_score = r.kind == MatrixKind::independent ? r.at(i, i) : r.at(t - 1, i);
    out.avg.push_back(final_score);
    out.bwt.push_back(r.kind == MatrixKind::continual ? r.at(t - 1, i) - r.at(i, i) : 0.0);
  }
  return out;
}

}  // namespace samcl
