#pragma once

// Hand-computed confusion-matrix fixtures for the binary metrics, checked by
// both the unit and acceptance suites. Expected values were derived on paper
// from the stated rules: threshold predictions at 0.5, precision/F1 zero
// fallbacks, tie-aware pairwise AUC, and uninterpolated TPR at an FPR budget.

#include <vector>

#include "labelmia/common.hpp"

namespace lmia_test {

struct MetricsFixture {
  std::vector<lmia::real_t> scores;
  std::vector<int> labels;
  lmia::real_t fpr_target;
  lmia::real_t accuracy, precision, recall, f1, auc, tpr_at_fpr;
};

inline const std::vector<MetricsFixture>& metrics_fixtures() {
  using R = lmia::real_t;
  static const std::vector<MetricsFixture> fixtures = {
      // 1: perfect separation
      {{R(0.9), R(0.8), R(0.3), R(0.1)}, {1, 1, 0, 0}, R(0.1), 1, 1, 1, 1, 1, 1},
      // 2: one discordant pair
      {{R(0.9), R(0.8), R(0.4), R(0.3)}, {1, 0, 1, 0}, R(0.1),
       R(0.5), R(0.5), R(0.5), R(0.5), R(0.75), R(0.5)},
      // 3: all scores tied at the threshold
      {{R(0.5), R(0.5), R(0.5), R(0.5)}, {1, 0, 1, 0}, R(0.1),
       R(0.5), R(0.5), 1, R(2.0 / 3.0), R(0.5), 0},
      // 4: perfectly inverted ranking
      {{R(0.1), R(0.2), R(0.8), R(0.9)}, {1, 1, 0, 0}, R(0.1), 0, 0, 0, 0, 0, 0},
      // 5: no positive predictions, partial ranking skill
      {{R(0.4), R(0.3), R(0.2), R(0.1)}, {1, 0, 1, 0}, R(0.1),
       R(0.5), 0, 0, 0, R(0.75), R(0.5)},
      // 6: single positive ranked top
      {{R(0.9), R(0.7), R(0.6), R(0.2), R(0.1)}, {1, 0, 0, 0, 0}, R(0.1),
       R(0.6), R(1.0 / 3.0), 1, R(0.5), 1, 1},
      // 7: three-way tie spanning both classes
      {{R(0.8), R(0.8), R(0.8), R(0.2)}, {1, 0, 1, 0}, R(0.1),
       R(0.75), R(2.0 / 3.0), 1, R(0.8), R(0.75), 0},
      // 8: same data, looser FPR budget admits the tied block
      {{R(0.8), R(0.8), R(0.8), R(0.2)}, {1, 0, 1, 0}, R(0.5),
       R(0.75), R(2.0 / 3.0), 1, R(0.8), R(0.75), 1},
      // 9: minimal perfect pair
      {{R(0.6), R(0.4)}, {1, 0}, R(0.1), 1, 1, 1, 1, 1, 1},
      // 10: minimal inverted pair
      {{R(0.4), R(0.6)}, {1, 0}, R(0.1), 0, 0, 0, 0, 0, 0},
      // 11: minimal tie at the threshold
      {{R(0.5), R(0.5)}, {1, 0}, R(0.1), R(0.5), R(0.5), 1, R(2.0 / 3.0), R(0.5), 0},
      // 12: eight points, mixed ordering
      {{R(0.95), R(0.85), R(0.75), R(0.65), R(0.55), R(0.45), R(0.35), R(0.25)},
       {1, 1, 0, 1, 0, 0, 1, 0}, R(0.1),
       R(0.625), R(0.6), R(0.75), R(2.0 / 3.0), R(0.75), R(0.5)},
      // 13: same data, FPR budget 0.25 admits one false positive
      {{R(0.95), R(0.85), R(0.75), R(0.65), R(0.55), R(0.45), R(0.35), R(0.25)},
       {1, 1, 0, 1, 0, 0, 1, 0}, R(0.25),
       R(0.625), R(0.6), R(0.75), R(2.0 / 3.0), R(0.75), R(0.75)},
      // 14: single positive ranked bottom
      {{R(0.3), R(0.2), R(0.9), R(0.8), R(0.7)}, {0, 1, 0, 0, 0}, R(0.1),
       R(0.2), 0, 0, 0, 0, 0},
      // 15: ties within each score level, half the pairs concordant
      {{R(0.7), R(0.7), R(0.3), R(0.3)}, {1, 0, 1, 0}, R(0.1),
       R(0.5), R(0.5), R(0.5), R(0.5), R(0.5), 0},
      // 16: scores straddling the threshold tightly
      {{R(0.5), R(0.49), R(0.51), R(0.2)}, {1, 0, 1, 0}, R(0.1), 1, 1, 1, 1, 1, 1},
      // 17: top score is a negative
      {{R(0.9), R(0.8), R(0.7), R(0.1)}, {0, 1, 0, 0}, R(0.1),
       R(0.5), R(1.0 / 3.0), 1, R(0.5), R(2.0 / 3.0), 0},
      // 18: every point predicted positive
      {{R(0.9), R(0.8), R(0.7), R(0.6)}, {1, 0, 1, 1}, R(0.1),
       R(0.75), R(0.75), 1, R(6.0 / 7.0), R(1.0 / 3.0), R(1.0 / 3.0)},
      // 19: duplicated score levels across classes
      {{R(0.6), R(0.6), R(0.6), R(0.4), R(0.4), R(0.4)}, {1, 1, 0, 1, 0, 0}, R(0.1),
       R(2.0 / 3.0), R(2.0 / 3.0), R(2.0 / 3.0), R(2.0 / 3.0), R(2.0 / 3.0), 0},
      // 20: FPR budget of 1 admits every threshold
      {{R(0.2), R(0.9)}, {1, 0}, R(1.0), 0, 0, 0, 0, 0, 1},
  };
  return fixtures;
}

}  // namespace lmia_test
