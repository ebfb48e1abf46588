// Copyright 2026 The MFR Authors.
// SPDX-License-Identifier: Apache-2.0
//
// Finite-difference verification of the first- and second-order gradient
// paths on small seeded problems.

#ifndef MFR_GRADCHECK_HPP_
#define MFR_GRADCHECK_HPP_

#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "mfr/trainer.hpp"

namespace mfr {

struct ToyShape {
  std::vector<std::size_t> widths{6, 12, 8};
  std::size_t batch_size = 6;
  std::size_t train_domains = 2;
};

// A random MLP and one episode of Gaussian observations: the meta-train
// batch spans train_domains tags, the meta-test batch a single tag.
struct ToyProblem {
  EmbeddingModel model;
  ParameterSet theta;
  Episode episode;
};

ToyProblem make_toy_problem(std::uint64_t seed, const ToyShape& shape = {});

std::vector<double> flatten(std::span<const Tensor> tensors);

// Central differences (f(x + h e_i) - f(x - h e_i)) / 2h over every scalar
// of `at`, in flatten order.
std::vector<double> central_differences(
    const std::function<double(std::span<const Tensor>)>& f,
    std::span<const Tensor> at, double h);

// max_i |got_i - want_i| / max(|got_i|, |want_i|, floor).
double max_relative_error(std::span<const double> got, std::span<const double> want,
                          double floor);

// Relative error floor used by the checks: 1e-6 * max(1, max_i |want_i|).
double relative_floor(std::span<const double> want);

// gamma * L_S(theta) + (1 - gamma) * L_T(theta - alpha * grad L_S(theta)),
// with the inner gradient taken by first-order differentiation.
double composed_objective(const ToyProblem& p, std::span<const Tensor> theta,
                          const LossConfig& lc, double alpha, double gamma);

struct GradCheckConfig {
  std::uint64_t seed = 1;
  std::size_t instances = 5;
  double h = 1e-5;
  double alpha = 1e-2;
  double gamma = 0.5;
  double s = 4.0;
  double taylor_s = 1.0;  // flatter objective so the quadratic term dominates
  double first_order_tolerance = 1e-4;
  double second_order_tolerance = 1e-3;
  double taylor_low = 0.15;
  double taylor_high = 0.35;
  double gap_ratio = 0.7;
  // Negative control: replaces the high-order gradient by the first-order
  // one in the second-order suite.
  bool inject_bug = false;
};

struct CheckResult {
  std::string suite;  // first_order, second_order, taylor, first_order_gap
  std::string name;
  double value = 0.0;
  std::string limit;
  bool passed = false;
};

struct GradCheckReport {
  std::vector<CheckResult> results;

  bool passed() const;
  std::string to_text() const;
};

// Loss config of the toy suites: all three losses at scale cfg.s. The
// classification templates are differentiated so that the checked gradient
// is the true derivative of the loss value.
LossConfig toy_loss_config(const GradCheckConfig& cfg);

// Aggregated gradient of one episode for the given mode.
std::vector<Tensor> episode_meta_gradient(const ToyProblem& p, const LossConfig& lc,
                                          double alpha, double gamma, MetaMode mode);

GradCheckReport run_grad_checks(const GradCheckConfig& cfg);

}  // namespace mfr

#endif  // MFR_GRADCHECK_HPP_
