#include "labelmia/optim.hpp"

#include <cmath>

namespace lmia {

void AdamState::reset(const std::vector<Tensor*>& params) {
  step_count = 0;
  m.assign(params.size(), {});
  v.assign(params.size(), {});
  for (std::size_t i = 0; i < params.size(); ++i) {
    m[i].assign(params[i]->size(), real_t(0));
    v[i].assign(params[i]->size(), real_t(0));
  }
}

void AdamState::step(const std::vector<Tensor*>& params) {
  if (m.size() != params.size()) throw ArgumentError("adam: state not initialized");
  ++step_count;
  const real_t bc1 = real_t(1) - std::pow(beta1, static_cast<real_t>(step_count));
  const real_t bc2 = real_t(1) - std::pow(beta2, static_cast<real_t>(step_count));
  for (std::size_t p = 0; p < params.size(); ++p) {
    Tensor& t = *params[p];
    t.ensure_grad();
    if (m[p].size() != t.size()) throw ArgumentError("adam: parameter shape changed");
    for (std::size_t i = 0; i < t.size(); ++i) {
      real_t g = t.grad[i];
      if (!std::isfinite(g)) throw NumericError("adam: non-finite gradient");
      if (weight_decay > real_t(0)) g += weight_decay * t.values[i];
      m[p][i] = beta1 * m[p][i] + (real_t(1) - beta1) * g;
      v[p][i] = beta2 * v[p][i] + (real_t(1) - beta2) * g * g;
      const real_t mhat = m[p][i] / bc1;
      const real_t vhat = v[p][i] / bc2;
      t.values[i] -= learning_rate * mhat / (std::sqrt(vhat) + epsilon);
    }
  }
}

void zero_grads(const std::vector<Tensor*>& params) {
  for (Tensor* p : params) p->zero_grad();
}

Tensor glorot_uniform(std::size_t fan_in, std::size_t fan_out, Rng& rng) {
  const real_t limit =
      std::sqrt(real_t(6) / static_cast<real_t>(fan_in + fan_out));
  Tensor t = Tensor::zeros({fan_in, fan_out});
  for (real_t& v : t.values)
    v = static_cast<real_t>((rng.uniform() * 2.0 - 1.0) * static_cast<double>(limit));
  return t;
}

}  // namespace lmia
