// Copyright 2026 The MFR Authors.
// SPDX-License-Identifier: Apache-2.0

#include <gtest/gtest.h>

#include <random>

#include "mfr/autodiff.hpp"
#include "mfr/error.hpp"
#include "mfr/model.hpp"
#include "oracles.hpp"

namespace mfr {
namespace {

TEST(Autodiff, Quadratic) {
  Tape tape;
  Var x = tape.leaf(Tensor::scalar(3.0));
  auto g = grad(x * x, std::vector<Var>{x});
  EXPECT_DOUBLE_EQ(g[0].item(), 6.0);
}

TEST(Autodiff, NormalizeMatchesFiniteDifferences) {
  auto f = [](const std::vector<double>& v) {
    return sum_all(l2_normalize_rows(Tensor::matrix(1, 2, v))).item();
  };
  Tape tape;
  Var x = tape.leaf(Tensor::matrix(1, 2, {3, 4}));
  auto g = grad(sum_all(l2_normalize_rows(x)), std::vector<Var>{x});
  auto fd = oracle::finite_difference(f, {3, 4}, 1e-5);
  std::vector<double> got(g[0].data().begin(), g[0].data().end());
  EXPECT_LE(oracle::max_rel_err(got, fd), 1e-6);
}

TEST(Autodiff, ConstantFunctionHasZeroGradient) {
  Tape tape;
  Var x = tape.leaf(Tensor::matrix(2, 2, {1, 2, 3, 4}));
  Var c(Tensor::scalar(5.0));
  Var y = tape.leaf(Tensor::scalar(1.0));
  auto g = grad(y * c, std::vector<Var>{x});
  EXPECT_TRUE(g[0].identical(Tensor::zeros({2, 2})));
}

TEST(Autodiff, Errors) {
  Tape tape, other;
  Var x = tape.leaf(Tensor::vector({1, 2}));
  EXPECT_THROW(grad(x * x, std::vector<Var>{x}), GraphError);  // non-scalar
  Var y = other.leaf(Tensor::scalar(1.0));
  Var s = sum_all(x);
  EXPECT_THROW(grad(s, std::vector<Var>{y}), GraphError);  // foreign input
}

TEST(Autodiff, GradOfGradRequiresRecordedInner) {
  Tape tape;
  Var x = tape.leaf(Tensor::scalar(2.0));
  auto inner = grad(x * x * x, std::vector<Var>{x});
  Var moved = x - scale(Var(inner[0]), 0.1);
  EXPECT_THROW(grad_of_grad(moved * moved, std::vector<Var>{x}), GraphError);
}

// f(x) = (x - a * 2x)^2 with recorded inner gradient: d/dx = 2 (1 - 2a)^2 x.
TEST(Autodiff, GradOfGradScalar) {
  const double a = 0.1;
  Tape tape;
  Var x = tape.leaf(Tensor::scalar(1.5));
  auto gi = grad_recorded(x * x, std::vector<Var>{x});
  Var moved = x - scale(gi[0], a);
  auto g = grad_of_grad(moved * moved, std::vector<Var>{x});
  EXPECT_NEAR(g[0].item(), 2.0 * (1 - 2 * a) * (1 - 2 * a) * 1.5, 1e-14);
}

TEST(Autodiff, AlphaZeroGradOfGradEqualsPlainGrad) {
  Tape t1;
  Var x = t1.leaf(Tensor::vector({0.3, -0.7}));
  auto gi = grad_recorded(sum_all(tanh(x) * x), std::vector<Var>{x});
  Var moved = x - scale(gi[0], 0.0);
  auto g = grad_of_grad(sum_all(exp(moved)), std::vector<Var>{x});
  Tape t2;
  Var y = t2.leaf(Tensor::vector({0.3, -0.7}));
  auto want = grad(sum_all(exp(y)), std::vector<Var>{y});
  for (std::size_t i = 0; i < 2; ++i) EXPECT_DOUBLE_EQ(g[0][i], want[0][i]);
}

// Random 2-layer net of 20 parameters: meta-gradient of the composed
// objective against central differences (h = 1e-4).
TEST(Autodiff, GradOfGradMatchesFiniteDifferences) {
  std::mt19937_64 rng(11);
  std::normal_distribution<double> n(0.0, 0.5);
  std::vector<double> x0(12);  // x [3x4]
  for (auto& v : x0) v = n(rng);
  std::vector<double> p(20);
  for (auto& v : p) v = n(rng);
  const double alpha = 0.05;
  // w1 [4x3], w2 [3x2], b [2].
  auto build = [&](const std::vector<Var>& th) {
    Var x(Tensor::matrix(3, 4, x0));
    Var h = tanh(matmul(x, th[0]));
    return add(matmul(h, th[1]), broadcast_rows(th[2], 3));
  };
  auto split = [&](Tape& tape, const std::vector<double>& q) {
    return std::vector<Var>{
        tape.leaf(Tensor::matrix(4, 3, {q.begin(), q.begin() + 12})),
        tape.leaf(Tensor::matrix(3, 2, {q.begin() + 12, q.begin() + 18})),
        tape.leaf(Tensor::vector({q.begin() + 18, q.end()}))};
  };
  auto inner_loss = [&](const std::vector<Var>& th) { return sum_all(pow(build(th), 2.0)); };
  auto outer_loss = [&](const std::vector<Var>& th) {
    return sum_all(exp(scale(build(th), 0.5)));
  };
  auto composed = [&](const std::vector<double>& q) {
    Tape tape;
    auto th = split(tape, q);
    auto gi = grad(inner_loss(th), th);
    std::vector<Var> moved;
    for (std::size_t i = 0; i < 3; ++i) moved.emplace_back(sub(th[i].value(), scale(gi[i], alpha)));
    return outer_loss(moved).value().item();
  };
  Tape tape;
  auto th = split(tape, p);
  auto gi = grad_recorded(inner_loss(th), th);
  auto moved = axpy(th, -alpha, gi);
  auto g = grad_of_grad(outer_loss(moved), th);
  std::vector<double> got;
  for (auto& t : g) got.insert(got.end(), t.data().begin(), t.data().end());
  auto fd = oracle::finite_difference(composed, p, 1e-4);
  EXPECT_LE(oracle::max_rel_err(got, fd), 1e-5);
}

TEST(Autodiff, StopGradientBlocksFlow) {
  Tape tape;
  Var x = tape.leaf(Tensor::scalar(2.0));
  auto g = grad(x * stop_gradient(x), std::vector<Var>{x});
  EXPECT_DOUBLE_EQ(g[0].item(), 2.0);
}

TEST(Autodiff, CrossEntropySumMatchesDirect) {
  Tape tape;
  Var l = tape.leaf(Tensor::matrix(2, 3, {0.5, -0.2, 1.1, 0.0, 0.3, -1.0}));
  std::vector<std::size_t> labels{2, 1};
  Var ce = cross_entropy_sum(l, labels);
  const double want = softmax_cross_entropy(Tensor::vector({0.5, -0.2, 1.1}), 2) +
                      softmax_cross_entropy(Tensor::vector({0.0, 0.3, -1.0}), 1);
  EXPECT_NEAR(ce.value().item(), want, 1e-14);
}

}  // namespace
}  // namespace mfr
