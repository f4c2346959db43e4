#include "labelmia/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace lmia {

MetricsReport compute_metrics(const std::vector<real_t>& scores, const std::vector<int>& labels,
                              real_t threshold, real_t fpr_target) {
  if (scores.size() != labels.size())
    throw ArgumentError("compute_metrics: scores and labels differ in length");
  if (scores.empty()) throw ArgumentError("compute_metrics: empty input");
  std::size_t n_pos = 0, n_neg = 0;
  for (int y : labels) {
    if (y == 1)
      ++n_pos;
    else if (y == 0)
      ++n_neg;
    else
      throw ArgumentError("compute_metrics: labels must be 0 or 1");
  }
  if (n_pos == 0 || n_neg == 0)
    throw ArgumentError("compute_metrics: both classes must be present");

  MetricsReport r;
  r.fpr_target = fpr_target;
  r.n_positive = n_pos;
  r.n_negative = n_neg;

  std::size_t tp = 0, fp = 0, tn = 0, fn = 0;
  for (std::size_t i = 0; i < scores.size(); ++i) {
    const bool pred = scores[i] >= threshold;
    if (labels[i] == 1)
      pred ? ++tp : ++fn;
    else
      pred ? ++fp : ++tn;
  }
  const std::size_t n = scores.size();
  r.accuracy = static_cast<real_t>(tp + tn) / static_cast<real_t>(n);
  r.precision = (tp + fp) ? static_cast<real_t>(tp) / static_cast<real_t>(tp + fp) : real_t(0);
  r.recall = static_cast<real_t>(tp) / static_cast<real_t>(n_pos);
  r.f1 = (r.precision + r.recall) > real_t(0)
             ? 2 * r.precision * r.recall / (r.precision + r.recall)
             : real_t(0);

  // AUC via average ranks; tied scores share the mean of their rank range.
  {
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), std::size_t(0));
    std::sort(order.begin(), order.end(),
              [&](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });
    real_t pos_rank_sum = 0;
    std::size_t i = 0;
    while (i < n) {
      std::size_t j = i;
      while (j < n && scores[order[j]] == scores[order[i]]) ++j;
      const real_t avg_rank = static_cast<real_t>(i + 1 + j) / real_t(2);  // 1-based
      for (std::size_t k = i; k < j; ++k)
        if (labels[order[k]] == 1) pos_rank_sum += avg_rank;
      i = j;
    }
    r.auc = (pos_rank_sum - real_t(n_pos) * real_t(n_pos + 1) / real_t(2)) /
            (static_cast<real_t>(n_pos) * static_cast<real_t>(n_neg));
  }

  // Sweep thresholds from high to low; each distinct score is a candidate
  // cut. Track the best TPR whose FPR stays within the target.
  {
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), std::size_t(0));
    std::sort(order.begin(), order.end(),
              [&](std::size_t a, std::size_t b) { return scores[a] > scores[b]; });
    real_t best = 0;  // empty prediction set: TPR 0, FPR 0
    std::size_t tp_c = 0, fp_c = 0, i = 0;
    while (i < n) {
      std::size_t j = i;
      while (j < n && scores[order[j]] == scores[order[i]]) {
        labels[order[j]] == 1 ? ++tp_c : ++fp_c;
        ++j;
      }
      const real_t fpr = static_cast<real_t>(fp_c) / static_cast<real_t>(n_neg);
      if (fpr <= fpr_target)
        best = std::max(best, static_cast<real_t>(tp_c) / static_cast<real_t>(n_pos));
      i = j;
    }
    r.tpr_at_fpr = best;
  }
  return r;
}

AggregateSummary aggregate_repetitions(const std::vector<MetricsReport>& reports) {
  if (reports.empty()) throw ArgumentError("aggregate_repetitions: no reports");
  for (const auto& r : reports)
    if (r.fpr_target != reports.front().fpr_target)
      throw ArgumentError("aggregate_repetitions: mixed fpr_target values");

  AggregateSummary s;
  s.count = reports.size();
  s.fpr_target = reports.front().fpr_target;

  auto fill = [&](MetricStat& st, auto field) {
    real_t mean = 0;
    bool all_equal = true;
    for (const auto& r : reports) {
      mean += r.*field;
      all_equal = all_equal && r.*field == reports.front().*field;
    }
    mean /= static_cast<real_t>(reports.size());
    real_t var = 0;
    // identical inputs have zero deviation by definition; skipping the
    // subtraction avoids a last-ulp residue from the mean
    if (reports.size() > 1 && !all_equal) {
      for (const auto& r : reports) {
        const real_t d = r.*field - mean;
        var += d * d;
      }
      var /= static_cast<real_t>(reports.size() - 1);
    }
    st.mean = mean;
    st.stddev = std::sqrt(var);
  };
  fill(s.accuracy, &MetricsReport::accuracy);
  fill(s.precision, &MetricsReport::precision);
  fill(s.recall, &MetricsReport::recall);
  fill(s.f1, &MetricsReport::f1);
  fill(s.auc, &MetricsReport::auc);
  fill(s.tpr_at_fpr, &MetricsReport::tpr_at_fpr);
  return s;
}

std::vector<ImportanceEntry> permutation_importance(
    const std::vector<real_t>& features, std::size_t n, std::size_t d,
    const std::vector<int>& labels, const std::vector<std::string>& names,
    const std::function<std::vector<real_t>(const std::vector<real_t>&)>& score_fn,
    ImportanceMetric metric, std::size_t repeats, std::uint64_t seed) {
  if (repeats < 1) throw ArgumentError("permutation_importance: repeats must be at least 1");
  if (features.size() != n * d) throw ArgumentError("permutation_importance: matrix size mismatch");
  if (labels.size() != n) throw ArgumentError("permutation_importance: label count mismatch");
  if (names.size() != d) throw ArgumentError("permutation_importance: name count mismatch");

  auto metric_of = [&](const std::vector<real_t>& scores) -> real_t {
    MetricsReport r = compute_metrics(scores, labels);
    return metric == ImportanceMetric::Accuracy ? r.accuracy : r.auc;
  };

  const real_t baseline = metric_of(score_fn(features));

  std::vector<ImportanceEntry> out(d);
  std::vector<real_t> shuffled = features;
  std::vector<std::size_t> perm(n);
  for (std::size_t j = 0; j < d; ++j) {
    real_t sum = 0;
    for (std::size_t rep = 0; rep < repeats; ++rep) {
      Rng rng(derive_seed(seed, j, rep));
      std::iota(perm.begin(), perm.end(), std::size_t(0));
      rng.shuffle(perm);
      for (std::size_t i = 0; i < n; ++i)
        shuffled[i * d + j] = features[perm[i] * d + j];
      sum += metric_of(score_fn(shuffled));
    }
    for (std::size_t i = 0; i < n; ++i) shuffled[i * d + j] = features[i * d + j];
    out[j].name = names[j];
    out[j].importance = baseline - sum / static_cast<real_t>(repeats);
  }
  std::stable_sort(out.begin(), out.end(), [](const ImportanceEntry& a, const ImportanceEntry& b) {
    return a.importance > b.importance;
  });
  return out;
}

}  // namespace lmia
