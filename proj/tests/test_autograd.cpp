#include <doctest.h>

#include <cmath>

#include "labelmia/autograd.hpp"
#include "labelmia/optim.hpp"
#include "test_support.hpp"

using namespace lmia;
using lmia_test::fd_gradient;
using lmia_test::max_rel_err;

namespace {

Tensor random_tensor(std::vector<std::size_t> shape, Rng& rng, double scale = 1.0) {
  Tensor t = Tensor::zeros(std::move(shape));
  for (real_t& v : t.values) v = static_cast<real_t>((rng.uniform() * 2 - 1) * scale);
  return t;
}

std::vector<real_t> random_targets(std::size_t n, Rng& rng) {
  std::vector<real_t> t(n);
  for (real_t& v : t) v = rng.uniform() < 0.5 ? real_t(0) : real_t(1);
  return t;
}

}  // namespace

TEST_CASE("linear layer gradients match finite differences") {
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    Rng rng(seed);
    const std::size_t n = 1 + rng.uniform_index(6), din = 1 + rng.uniform_index(6),
                      dout = 2 + rng.uniform_index(5);
    Tensor X = random_tensor({n, din}, rng);
    Tensor W = random_tensor({din, dout}, rng);
    Tensor b = random_tensor({dout}, rng);
    std::vector<std::int32_t> labels(n);
    for (auto& y : labels) y = static_cast<std::int32_t>(rng.uniform_index(dout));

    auto eval = [&]() {
      Tape t;
      auto logits = t.add_rowvec(t.matmul(t.input(X), t.param(W)), t.param(b));
      return t.scalar_value(t.softmax_cross_entropy(logits, labels));
    };

    Tape t;
    auto xw = t.matmul(t.input(X), t.param(W));
    auto logits = t.add_rowvec(xw, t.param(b));
    auto loss = t.softmax_cross_entropy(logits, labels);
    W.zero_grad();
    b.zero_grad();
    t.backward(loss);

    CHECK(max_rel_err(W.grad, fd_gradient(eval, W)) < 1e-4);
    CHECK(max_rel_err(b.grad, fd_gradient(eval, b)) < 1e-4);
  }
}

TEST_CASE("activation gradients match finite differences") {
  for (std::uint64_t seed = 0; seed < 6; ++seed) {
    Rng rng(100 + seed);
    Tensor X = random_tensor({4, 3}, rng);
    Tensor W = random_tensor({3, 2}, rng);
    std::vector<std::int32_t> labels{0, 1, 1, 0};

    for (int which = 0; which < 2; ++which) {
      auto run = [&](Tape& t) {
        auto h = t.matmul(t.input(X), t.param(W));
        h = which == 0 ? t.relu(h) : t.elu(h);
        return t.softmax_cross_entropy(h, labels);
      };
      auto eval = [&]() {
        Tape t;
        return t.scalar_value(run(t));
      };
      Tape t;
      auto loss = run(t);
      W.zero_grad();
      t.backward(loss);
      CHECK(max_rel_err(W.grad, fd_gradient(eval, W)) < 1e-3);
    }
  }
}

TEST_CASE("spmm and concat gradients match finite differences") {
  Rng rng(7);
  SparseCoo s;
  s.rows = 4;
  s.cols = 4;
  for (std::uint32_t i = 0; i < 4; ++i)
    for (std::uint32_t j = 0; j < 4; ++j)
      if (rng.uniform() < 0.5)
        s.entries.push_back({i, j, static_cast<real_t>(rng.uniform() * 2 - 1)});
  Tensor X = random_tensor({4, 3}, rng);
  Tensor W = random_tensor({6, 2}, rng);
  std::vector<std::int32_t> labels{1, 0, 1, 0};

  auto run = [&](Tape& t) {
    auto x = t.param(X);
    auto a = t.spmm(s, x);
    auto c = t.concat_cols({a, x});
    auto logits = t.matmul(c, t.param(W));
    return t.softmax_cross_entropy(logits, labels);
  };
  auto eval = [&]() {
    Tape t;
    return t.scalar_value(run(t));
  };
  Tape t;
  auto loss = run(t);
  X.zero_grad();
  W.zero_grad();
  t.backward(loss);
  CHECK(max_rel_err(X.grad, fd_gradient(eval, X)) < 1e-3);
  CHECK(max_rel_err(W.grad, fd_gradient(eval, W)) < 1e-3);
}

TEST_CASE("gat attention gradients match finite differences") {
  for (std::uint64_t seed = 0; seed < 8; ++seed) {
    Rng rng(200 + seed);
    const std::size_t n = 4, d = 3;
    auto edges = std::make_shared<AttentionEdges>();
    edges->num_nodes = n;
    edges->sources.resize(n);
    for (std::uint32_t i = 0; i < n; ++i) {
      edges->sources[i].push_back(i);
      for (std::uint32_t j = 0; j < n; ++j)
        if (j != i && rng.uniform() < 0.6) edges->sources[i].push_back(j);
    }
    Tensor H = random_tensor({n, d}, rng);
    Tensor Ac = random_tensor({d}, rng);
    Tensor An = random_tensor({d}, rng);
    std::vector<std::int32_t> labels{0, 1, 2, 0};

    auto run = [&](Tape& t) {
      auto o = t.gat_attention(edges, t.param(H), t.param(Ac), t.param(An), real_t(0.2));
      return t.softmax_cross_entropy(o, labels);
    };
    auto eval = [&]() {
      Tape t;
      return t.scalar_value(run(t));
    };
    Tape t;
    auto loss = run(t);
    H.zero_grad();
    Ac.zero_grad();
    An.zero_grad();
    t.backward(loss);
    CHECK(max_rel_err(H.grad, fd_gradient(eval, H)) < 1e-3);
    CHECK(max_rel_err(Ac.grad, fd_gradient(eval, Ac)) < 1e-3);
    CHECK(max_rel_err(An.grad, fd_gradient(eval, An)) < 1e-3);
  }
}

TEST_CASE("batchnorm training gradients match finite differences") {
  for (std::uint64_t seed = 0; seed < 6; ++seed) {
    Rng rng(300 + seed);
    const std::size_t n = 5, d = 3;
    Tensor X = random_tensor({n, d}, rng);
    Tensor gamma = random_tensor({d}, rng, 0.5);
    for (real_t& v : gamma.values) v += real_t(1);
    Tensor beta = random_tensor({d}, rng, 0.3);
    std::vector<std::int32_t> labels{0, 1, 2, 1, 0};

    auto run = [&](Tape& t, BatchNormState& st) {
      auto y = t.batchnorm(t.param(X), t.param(gamma), t.param(beta), st, true);
      return t.softmax_cross_entropy(y, labels);
    };
    auto eval = [&]() {
      BatchNormState st = BatchNormState::init(d);
      Tape t;
      return t.scalar_value(run(t, st));
    };
    BatchNormState st = BatchNormState::init(d);
    Tape t;
    auto loss = run(t, st);
    X.zero_grad();
    gamma.zero_grad();
    beta.zero_grad();
    t.backward(loss);
    CHECK(max_rel_err(X.grad, fd_gradient(eval, X)) < 1e-3);
    CHECK(max_rel_err(gamma.grad, fd_gradient(eval, gamma)) < 1e-3);
    CHECK(max_rel_err(beta.grad, fd_gradient(eval, beta)) < 1e-3);
  }
}

TEST_CASE("bce and mse gradients match finite differences") {
  Rng rng(17);
  Tensor X = random_tensor({6, 2}, rng);
  Tensor W = random_tensor({2, 1}, rng);
  auto targets = random_targets(6, rng);

  auto eval_bce = [&]() {
    Tape t;
    return t.scalar_value(t.bce_with_logits(t.matmul(t.input(X), t.param(W)), targets));
  };
  {
    Tape t;
    auto loss = t.bce_with_logits(t.matmul(t.input(X), t.param(W)), targets);
    W.zero_grad();
    t.backward(loss);
    CHECK(max_rel_err(W.grad, fd_gradient(eval_bce, W)) < 1e-4);
  }

  Tensor target = random_tensor({6, 1}, rng);
  auto eval_mse = [&]() {
    Tape t;
    return t.scalar_value(t.mean_squared_error(t.matmul(t.input(X), t.param(W)), target));
  };
  {
    Tape t;
    auto loss = t.mean_squared_error(t.matmul(t.input(X), t.param(W)), target);
    W.zero_grad();
    t.backward(loss);
    CHECK(max_rel_err(W.grad, fd_gradient(eval_mse, W)) < 1e-4);
  }
}

TEST_CASE("uniform logits give log(num_classes) loss") {
  const std::size_t n = 4, c = 5;
  Tensor X = Tensor::zeros({n, 3});
  Tensor W = Tensor::zeros({3, c});
  std::vector<std::int32_t> labels{0, 4, 2, 1};
  Tape t;
  auto loss = t.softmax_cross_entropy(t.matmul(t.input(X), t.param(W)), labels);
  CHECK(t.scalar_value(loss) == doctest::Approx(std::log(double(c))).epsilon(1e-12));
}

TEST_CASE("identity network has zero mse against its input") {
  Tensor X = Tensor::matrix(3, 2, {1, 2, 3, 4, 5, 6});
  Tape t;
  auto loss = t.mean_squared_error(t.input(X), X);
  CHECK(t.scalar_value(loss) == 0.0);
}

TEST_CASE("softmax rows sum to one") {
  Rng rng(23);
  Tensor X = random_tensor({7, 4}, rng, 10.0);
  Tape t;
  auto y = t.softmax(t.input(X));
  const Tensor& Y = t.value(y);
  for (std::size_t i = 0; i < 7; ++i) {
    real_t sum = 0;
    for (std::size_t j = 0; j < 4; ++j) sum += Y.at(i, j);
    CHECK(std::abs(sum - real_t(1)) < 1e-9);
  }
}

TEST_CASE("dropout zeroes the expected fraction and rescales") {
  Rng rng(31);
  Tensor X = Tensor::zeros({100, 100});
  for (real_t& v : X.values) v = real_t(1);
  Tape t;
  auto y = t.dropout(t.input(X), real_t(0.5), true, rng);
  const Tensor& Y = t.value(y);
  std::size_t zeros = 0;
  for (real_t v : Y.values) {
    if (v == real_t(0))
      ++zeros;
    else
      CHECK(v == real_t(2));
  }
  double frac = double(zeros) / double(Y.size());
  CHECK(frac > 0.47);
  CHECK(frac < 0.53);
}

TEST_CASE("dropout with rate zero is the identity bitwise") {
  Rng rng(5);
  Tensor X = random_tensor({4, 4}, rng);
  Rng drop_rng(1);
  Tape t;
  auto y = t.dropout(t.input(X), real_t(0), true, drop_rng);
  CHECK(t.value(y).values == X.values);
  auto y2 = t.dropout(t.input(X), real_t(0.7), false, drop_rng);
  CHECK(t.value(y2).values == X.values);
  CHECK_THROWS_AS(t.dropout(t.input(X), real_t(1), true, drop_rng), ArgumentError);
}

TEST_CASE("batchnorm normalizes columns and guards degenerate batches") {
  Tensor X = Tensor::matrix(4, 2, {1, 10, 2, 20, 3, 30, 4, 40});
  Tensor gamma = Tensor::vec({1, 1});
  Tensor beta = Tensor::vec({0, 0});
  BatchNormState st = BatchNormState::init(2);
  Tape t;
  auto y = t.batchnorm(t.param(X), t.param(gamma), t.param(beta), st, true);
  const Tensor& Y = t.value(y);
  for (std::size_t j = 0; j < 2; ++j) {
    real_t mean = 0, var = 0;
    for (std::size_t i = 0; i < 4; ++i) mean += Y.at(i, j);
    mean /= 4;
    for (std::size_t i = 0; i < 4; ++i) var += (Y.at(i, j) - mean) * (Y.at(i, j) - mean);
    var /= 4;
    CHECK(std::abs(mean) < 1e-10);
    CHECK(var == doctest::Approx(1.0).epsilon(1e-3));
  }

  // constant column collapses onto the shift parameter
  Tensor C = Tensor::matrix(3, 1, {5, 5, 5});
  Tensor g1 = Tensor::vec({2});
  Tensor b1 = Tensor::vec({7});
  BatchNormState st1 = BatchNormState::init(1);
  Tape t1;
  auto y1 = t1.batchnorm(t1.param(C), t1.param(g1), t1.param(b1), st1, true);
  for (std::size_t i = 0; i < 3; ++i) CHECK(t1.value(y1).at(i, 0) == doctest::Approx(7.0));

  // single-row training batch is rejected
  Tensor R = Tensor::matrix(1, 2, {1, 2});
  BatchNormState st2 = BatchNormState::init(2);
  Tape t2;
  CHECK_THROWS_AS(t2.batchnorm(t2.param(R), t2.param(gamma), t2.param(beta), st2, true),
                  NumericError);
}

TEST_CASE("non-finite loss raises a numeric error naming a node") {
  Tensor X = Tensor::matrix(1, 1, {1e308});
  Tensor W = Tensor::matrix(1, 1, {1e308});
  Tape t;
  auto z = t.matmul(t.input(X, "x"), t.param(W, "w"));
  auto loss = t.mean_squared_error(z, Tensor::zeros({1, 1}));
  CHECK_THROWS_AS(t.backward(loss), NumericError);
}

TEST_CASE("adam single step matches the hand-computed update") {
  Tensor p = Tensor::scalar(1);
  p.ensure_grad();
  p.grad[0] = 1;
  AdamState adam;
  adam.learning_rate = real_t(0.1);
  std::vector<Tensor*> params{&p};
  adam.reset(params);
  adam.step(params);
  // bias-corrected first step moves by lr * g / (|g| + eps)
  CHECK(p.values[0] == doctest::Approx(0.9).epsilon(1e-7));
}

TEST_CASE("weight decay pulls parameters toward zero with zero gradient") {
  Tensor p = Tensor::scalar(1);
  p.ensure_grad();
  p.grad[0] = 0;
  AdamState adam;
  adam.learning_rate = real_t(0.05);
  adam.weight_decay = real_t(0.5);
  std::vector<Tensor*> params{&p};
  adam.reset(params);
  adam.step(params);
  CHECK(p.values[0] < real_t(1));
  CHECK(p.values[0] == doctest::Approx(1.0 - 0.05).epsilon(1e-6));
}

TEST_CASE("adam with zero learning rate leaves parameters bitwise unchanged") {
  Rng rng(2);
  Tensor p = random_tensor({3, 3}, rng);
  Tensor orig = p;
  p.ensure_grad();
  for (real_t& g : p.grad) g = real_t(0.25);
  AdamState adam;
  adam.learning_rate = real_t(0);
  std::vector<Tensor*> params{&p};
  adam.reset(params);
  adam.step(params);
  CHECK(p.values == orig.values);
}

TEST_CASE("adam rejects non-finite gradients") {
  Tensor p = Tensor::scalar(1);
  p.ensure_grad();
  p.grad[0] = std::numeric_limits<real_t>::quiet_NaN();
  AdamState adam;
  std::vector<Tensor*> params{&p};
  adam.reset(params);
  CHECK_THROWS_AS(adam.step(params), NumericError);
}

TEST_CASE("gradients accumulate across backward calls") {
  Tensor W = Tensor::matrix(1, 1, {2});
  Tensor X = Tensor::matrix(1, 1, {3});
  W.zero_grad();
  for (int rep = 0; rep < 2; ++rep) {
    Tape t;
    auto loss = t.mean_squared_error(t.matmul(t.input(X), t.param(W)), Tensor::zeros({1, 1}));
    t.backward(loss);
  }
  // d/dW (3W)^2 = 18W = 36, accumulated twice
  CHECK(W.grad[0] == doctest::Approx(72.0));
}
