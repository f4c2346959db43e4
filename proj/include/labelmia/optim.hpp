#pragma once

#include <cstdint>
#include <vector>

#include "labelmia/common.hpp"
#include "labelmia/tensor.hpp"

namespace lmia {

/// Adam state over an ordered parameter list. Weight decay is applied as an
/// L2 term added to the gradient before the moment updates.
struct AdamState {
  real_t learning_rate = real_t(1e-3);
  real_t weight_decay = real_t(0);
  real_t beta1 = real_t(0.9);
  real_t beta2 = real_t(0.999);
  real_t epsilon = real_t(1e-8);
  std::int64_t step_count = 0;

  std::vector<std::vector<real_t>> m;
  std::vector<std::vector<real_t>> v;

  void reset(const std::vector<Tensor*>& params);

  /// One update over all parameters using their accumulated gradients.
  /// Throws NumericError on non-finite gradients.
  void step(const std::vector<Tensor*>& params);
};

void zero_grads(const std::vector<Tensor*>& params);

/// Glorot (uniform) initialization: limit = sqrt(6 / (fan_in + fan_out)).
Tensor glorot_uniform(std::size_t fan_in, std::size_t fan_out, Rng& rng);

}  // namespace lmia
