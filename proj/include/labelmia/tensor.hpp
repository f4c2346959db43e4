#pragma once

#include <cstddef>
#include <numeric>
#include <vector>

#include "labelmia/common.hpp"

namespace lmia {

/// Dense row-major tensor. `grad` is empty unless the tensor takes part in
/// training; when allocated it always matches `values` in length.
struct Tensor {
  std::vector<std::size_t> shape;
  std::vector<real_t> values;
  std::vector<real_t> grad;

  Tensor() = default;

  static Tensor zeros(std::vector<std::size_t> shp) {
    Tensor t;
    std::size_t n = 1;
    for (std::size_t s : shp) n *= s;
    t.shape = std::move(shp);
    t.values.assign(n, real_t(0));
    return t;
  }

  static Tensor scalar(real_t v) {
    Tensor t;
    t.shape = {1};
    t.values = {v};
    return t;
  }

  static Tensor vec(std::vector<real_t> v) {
    Tensor t;
    t.shape = {v.size()};
    t.values = std::move(v);
    return t;
  }

  static Tensor matrix(std::size_t rows, std::size_t cols, std::vector<real_t> v) {
    if (v.size() != rows * cols) throw ArgumentError("Tensor::matrix: size mismatch");
    Tensor t;
    t.shape = {rows, cols};
    t.values = std::move(v);
    return t;
  }

  std::size_t size() const { return values.size(); }
  std::size_t rows() const { return shape.empty() ? 0 : shape[0]; }
  std::size_t cols() const { return shape.size() < 2 ? 1 : shape[1]; }

  real_t& at(std::size_t r, std::size_t c) { return values[r * cols() + c]; }
  real_t at(std::size_t r, std::size_t c) const { return values[r * cols() + c]; }

  void ensure_grad() {
    if (grad.size() != values.size()) grad.assign(values.size(), real_t(0));
  }
  void zero_grad() {
    grad.assign(values.size(), real_t(0));
  }

  bool same_shape(const Tensor& o) const { return shape == o.shape; }
};

}  // namespace lmia
