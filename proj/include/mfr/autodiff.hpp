// Copyright 2026 The MFR Authors.
// SPDX-License-Identifier: Apache-2.0
//
// Tape-based reverse-mode differentiation over the tensor kernels.
//
// Every primitive's backward rule is written with the same primitives, so a
// backward pass run in DiffMode::kHigherOrder is itself recorded on the tape
// and can be differentiated again. That is how the meta-gradient through an
// inner SGD step is obtained.

#ifndef MFR_AUTODIFF_HPP_
#define MFR_AUTODIFF_HPP_

#include <cstddef>
#include <cstdint>
#include <memory>
#include <span>
#include <vector>

#include "mfr/tensor.hpp"

namespace mfr {

class Tape;

// A value plus, when tracked, the tape node that produced it. Untracked Vars
// are constants and receive no gradient.
class Var {
 public:
  Var() = default;
  explicit Var(Tensor value) : value_(std::move(value)) {}

  const Tensor& value() const { return value_; }
  const Shape& shape() const { return value_.shape(); }
  bool tracked() const { return tape_ != nullptr; }
  Tape* tape() const { return tape_; }
  std::size_t node() const { return node_; }

 private:
  friend class Tape;
  Tensor value_;
  Tape* tape_ = nullptr;
  std::size_t node_ = 0;
};

enum class DiffMode {
  // Gradients are plain values; nothing is recorded.
  kFirstOrder,
  // The backward pass is recorded, gradients are tracked Vars.
  kHigherOrder,
};

enum class Op : std::uint8_t {
  kLeaf,
  kAdd,
  kSub,
  kMul,
  kScale,
  kAddScalar,
  kTanh,
  kExp,
  kPow,
  kMatMul,
  kTranspose,
  kSumRows,
  kSumCols,
  kSumAll,
  kBroadcastRows,
  kBroadcastCols,
  kBroadcastScalar,
  kLogSoftmaxRows,
  kPick,
  kScatter,
  kStopGradient,
};

class Tape {
 public:
  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  // A differentiable input.
  Var leaf(Tensor value);

  std::size_t size() const { return nodes_.size(); }
  bool recording() const { return recording_ && !frozen_; }
  bool frozen() const { return frozen_; }
  // Stops recording for good; ops on tracked inputs yield constants.
  void freeze() { frozen_ = true; }

  // d output / d input for each input. Output must be a scalar tracked on
  // this tape; inputs must be tracked on this tape. Inputs the output does
  // not depend on get zero gradients.
  std::vector<Var> backward(const Var& output, std::span<const Var> inputs,
                            DiffMode mode);

  // True if the graph behind v contains nodes recorded by a higher-order
  // backward pass.
  bool depends_on_recorded_backward(const Var& v) const;

  // Internal: used by the op functions.
  Var record(Op op, Tensor value, std::vector<Var> inputs, double param = 0.0,
             std::size_t extent = 0,
             std::shared_ptr<const std::vector<std::size_t>> indices = {});

 private:
  friend class NoGradGuard;

  struct Node {
    Op op;
    std::vector<Var> inputs;
    double param;
    std::size_t extent;
    std::shared_ptr<const std::vector<std::size_t>> indices;
    Tensor value;
    bool from_backward;
  };

  Var output_var(std::size_t id) const;
  std::vector<Var> input_adjoints(const Node& node, const Var& out,
                                  const Var& g, const std::vector<bool>& need);

  std::vector<Node> nodes_;
  bool recording_ = true;
  bool frozen_ = false;
  bool in_recorded_backward_ = false;
};

// Suspends recording on a tape for the guard's lifetime.
class NoGradGuard {
 public:
  explicit NoGradGuard(Tape& tape) : tape_(tape), saved_(tape.recording_) {
    tape_.recording_ = false;
  }
  ~NoGradGuard() { tape_.recording_ = saved_; }
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  Tape& tape_;
  bool saved_;
};

// Gradients as plain tensors.
std::vector<Tensor> grad(const Var& output, std::span<const Var> inputs);

// Gradients recorded on the tape so they can be differentiated again.
std::vector<Var> grad_recorded(const Var& output, std::span<const Var> inputs);

// Total derivative of an objective that was built through a recorded inner
// gradient, e.g. L(theta - alpha * grad_recorded(L_inner, theta)). Raises
// GraphError if no recorded backward pass feeds the objective, which means
// the inner gradient was detached.
std::vector<Tensor> grad_of_grad(const Var& objective,
                                 std::span<const Var> inputs);

std::vector<Tensor> values_of(std::span<const Var> vars);

// Primitive ops. Results are tracked when any input is tracked and its tape
// is recording.
Var add(const Var& a, const Var& b);
Var sub(const Var& a, const Var& b);
Var mul(const Var& a, const Var& b);
Var scale(const Var& a, double factor);
Var add_scalar(const Var& a, double value);
Var tanh(const Var& a);
Var exp(const Var& a);
Var pow(const Var& a, double exponent);
Var matmul(const Var& a, const Var& b);
Var transpose(const Var& a);
Var sum_rows(const Var& a);
Var sum_cols(const Var& a);
Var sum_all(const Var& a);
Var broadcast_rows(const Var& v, std::size_t m);
Var broadcast_cols(const Var& v, std::size_t n);
Var broadcast_scalar(const Var& s, const Shape& shape);
Var log_softmax_rows(const Var& a);
Var pick(const Var& a, std::span<const std::size_t> indices);
Var scatter(const Var& v, std::span<const std::size_t> indices, std::size_t n);
// Identity forward, zero backward.
Var stop_gradient(const Var& a);

// Composites.
Var l2_normalize_rows(const Var& x, double eps = kNormEpsilon);
// Sum over rows of -log softmax(logits[i])[labels[i]].
Var cross_entropy_sum(const Var& logits, std::span<const std::size_t> labels);

inline Var operator+(const Var& a, const Var& b) { return add(a, b); }
inline Var operator-(const Var& a, const Var& b) { return sub(a, b); }
inline Var operator*(const Var& a, const Var& b) { return mul(a, b); }
inline Var operator*(double c, const Var& a) { return scale(a, c); }

}  // namespace mfr

#endif  // MFR_AUTODIFF_HPP_
