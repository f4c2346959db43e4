#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "labelmia/common.hpp"

namespace lmia {

struct MetricsReport {
  real_t accuracy = real_t(0);
  real_t precision = real_t(0);
  real_t recall = real_t(0);
  real_t f1 = real_t(0);
  real_t auc = real_t(0);
  real_t tpr_at_fpr = real_t(0);
  real_t fpr_target = real_t(0.1);
  std::size_t n_positive = 0;
  std::size_t n_negative = 0;
  std::uint64_t seed = 0;
  std::string config_fingerprint;
};

/// Binary-classification metrics at a fixed threshold (prediction = score >=
/// threshold). Precision and F1 fall back to 0 when undefined. AUC is the
/// Mann-Whitney rank statistic with ties credited 0.5. tpr_at_fpr is the
/// largest TPR reachable by any threshold whose FPR stays at or below
/// fpr_target, with no interpolation between thresholds. Both classes must be
/// present.
MetricsReport compute_metrics(const std::vector<real_t>& scores, const std::vector<int>& labels,
                              real_t threshold = real_t(0.5),
                              real_t fpr_target = real_t(0.1));

struct MetricStat {
  real_t mean = real_t(0);
  real_t stddev = real_t(0);
};

struct AggregateSummary {
  std::size_t count = 0;
  real_t fpr_target = real_t(0.1);
  MetricStat accuracy, precision, recall, f1, auc, tpr_at_fpr;
};

/// Mean and sample standard deviation (n-1 denominator, 0 when n == 1) per
/// metric. All reports must share one fpr_target.
AggregateSummary aggregate_repetitions(const std::vector<MetricsReport>& reports);

enum class ImportanceMetric { Accuracy, Auc };

struct ImportanceEntry {
  std::string name;
  real_t importance = real_t(0);
};

/// Permutation feature importance over a row-major [n x d] matrix: baseline
/// metric minus the mean metric after within-column shuffles, one derived RNG
/// stream per (column, repeat). `score_fn` maps a full feature matrix to one
/// score per row. Output is sorted by importance, descending; equal values
/// keep column order.
std::vector<ImportanceEntry> permutation_importance(
    const std::vector<real_t>& features, std::size_t n, std::size_t d,
    const std::vector<int>& labels, const std::vector<std::string>& names,
    const std::function<std::vector<real_t>(const std::vector<real_t>&)>& score_fn,
    ImportanceMetric metric, std::size_t repeats, std::uint64_t seed);

}  // namespace lmia
