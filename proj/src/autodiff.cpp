// Copyright 2026 The MFR Authors.
// SPDX-License-Identifier: Apache-2.0

#include "mfr/autodiff.hpp"

#include <optional>
#include <string>

#include "mfr/error.hpp"

namespace mfr {
namespace {

// The tape that should record an op over these inputs, or nullptr when the
// result is a constant.
Tape* recording_tape(std::initializer_list<const Var*> vars) {
  Tape* tape = nullptr;
  for (const Var* v : vars) {
    if (!v->tracked()) continue;
    if (tape != nullptr && tape != v->tape()) {
      throw GraphError("operands are recorded on different tapes");
    }
    tape = v->tape();
  }
  if (tape != nullptr && !tape->recording()) return nullptr;
  return tape;
}

auto share_indices(std::span<const std::size_t> indices) {
  return std::make_shared<const std::vector<std::size_t>>(indices.begin(),
                                                          indices.end());
}

}  // namespace

Var Tape::leaf(Tensor value) {
  if (frozen_) throw GraphError("cannot add a leaf to a frozen tape");
  nodes_.push_back(Node{Op::kLeaf, {}, 0.0, 0, {}, value, false});
  Var v(std::move(value));
  v.tape_ = this;
  v.node_ = nodes_.size() - 1;
  return v;
}

Var Tape::record(Op op, Tensor value, std::vector<Var> inputs, double param,
                 std::size_t extent,
                 std::shared_ptr<const std::vector<std::size_t>> indices) {
  nodes_.push_back(Node{op, std::move(inputs), param, extent,
                        std::move(indices), value, in_recorded_backward_});
  Var v(std::move(value));
  v.tape_ = this;
  v.node_ = nodes_.size() - 1;
  return v;
}

Var Tape::output_var(std::size_t id) const {
  Var v(nodes_[id].value);
  v.tape_ = const_cast<Tape*>(this);
  v.node_ = id;
  return v;
}

std::vector<Var> Tape::input_adjoints(const Node& node, const Var& out,
                                      const Var& g,
                                      const std::vector<bool>& need) {
  const auto& in = node.inputs;
  std::vector<Var> res(in.size());
  auto wants = [&](std::size_t k) {
    return in[k].tracked() && need[in[k].node()];
  };
  switch (node.op) {
    case Op::kLeaf:
    case Op::kStopGradient:
      break;
    case Op::kAdd:
      if (wants(0)) res[0] = g;
      if (wants(1)) res[1] = g;
      break;
    case Op::kSub:
      if (wants(0)) res[0] = g;
      if (wants(1)) res[1] = scale(g, -1.0);
      break;
    case Op::kMul:
      if (wants(0)) res[0] = mul(g, in[1]);
      if (wants(1)) res[1] = mul(g, in[0]);
      break;
    case Op::kScale:
      if (wants(0)) res[0] = scale(g, node.param);
      break;
    case Op::kAddScalar:
      if (wants(0)) res[0] = g;
      break;
    case Op::kTanh:
      // 1 - y^2
      if (wants(0)) res[0] = mul(g, add_scalar(scale(mul(out, out), -1.0), 1.0));
      break;
    case Op::kExp:
      if (wants(0)) res[0] = mul(g, out);
      break;
    case Op::kPow:
      if (wants(0)) {
        res[0] = mul(g, scale(pow(in[0], node.param - 1.0), node.param));
      }
      break;
    case Op::kMatMul:
      if (wants(0)) res[0] = matmul(g, transpose(in[1]));
      if (wants(1)) res[1] = matmul(transpose(in[0]), g);
      break;
    case Op::kTranspose:
      if (wants(0)) res[0] = transpose(g);
      break;
    case Op::kSumRows:
      if (wants(0)) res[0] = broadcast_rows(g, in[0].shape()[0]);
      break;
    case Op::kSumCols:
      if (wants(0)) res[0] = broadcast_cols(g, in[0].shape()[1]);
      break;
    case Op::kSumAll:
      if (wants(0)) res[0] = broadcast_scalar(g, in[0].shape());
      break;
    case Op::kBroadcastRows:
      if (wants(0)) res[0] = sum_rows(g);
      break;
    case Op::kBroadcastCols:
      if (wants(0)) res[0] = sum_cols(g);
      break;
    case Op::kBroadcastScalar:
      if (wants(0)) res[0] = sum_all(g);
      break;
    case Op::kLogSoftmaxRows:
      // g - softmax * rowsum(g), softmax = exp(y)
      if (wants(0)) {
        const std::size_t n = out.shape()[1];
        res[0] = sub(g, mul(exp(out), broadcast_cols(sum_cols(g), n)));
      }
      break;
    case Op::kPick:
      if (wants(0)) res[0] = scatter(g, *node.indices, in[0].shape()[1]);
      break;
    case Op::kScatter:
      if (wants(0)) res[0] = pick(g, *node.indices);
      break;
  }
  return res;
}

std::vector<Var> Tape::backward(const Var& output, std::span<const Var> inputs,
                                DiffMode mode) {
  if (!output.tracked() || output.tape() != this) {
    throw GraphError("backward: output is not recorded on this tape");
  }
  if (output.value().size() != 1) {
    throw GraphError("backward: output must be a scalar, got shape " +
                     shape_to_string(output.shape()));
  }
  for (const Var& in : inputs) {
    if (!in.tracked() || in.tape() != this) {
      throw GraphError("backward: input is not a member of this tape's graph");
    }
  }
  if (mode == DiffMode::kHigherOrder && frozen_) {
    throw GraphError("backward: cannot record on a frozen tape");
  }

  const std::size_t end = output.node() + 1;
  // need[i]: node i lies on a path from a requested input to the output.
  std::vector<bool> need(end, false);
  for (const Var& in : inputs) {
    if (in.node() < end) need[in.node()] = true;
  }
  for (std::size_t i = 0; i < end; ++i) {
    if (need[i]) continue;
    for (const Var& v : nodes_[i].inputs) {
      if (v.tracked() && need[v.node()]) {
        need[i] = true;
        break;
      }
    }
  }

  std::vector<std::optional<Var>> adj(end);
  adj[output.node()] = Var(Tensor::filled(output.shape(), 1.0));

  const bool saved_recording = recording_;
  const bool saved_flag = in_recorded_backward_;
  if (mode == DiffMode::kHigherOrder) {
    recording_ = true;
    in_recorded_backward_ = true;
  } else {
    recording_ = false;
  }
  try {
    for (std::size_t i = end; i-- > 0;) {
      if (!adj[i] || !need[i]) continue;
      if (nodes_[i].op == Op::kLeaf || nodes_[i].op == Op::kStopGradient) continue;
      // Copy: recording below may reallocate nodes_.
      const Node node = nodes_[i];
      const Var g = *adj[i];
      auto contrib = input_adjoints(node, output_var(i), g, need);
      for (std::size_t k = 0; k < contrib.size(); ++k) {
        if (!node.inputs[k].tracked() || !need[node.inputs[k].node()]) continue;
        auto& slot = adj[node.inputs[k].node()];
        slot = slot ? add(*slot, contrib[k]) : contrib[k];
      }
    }
  } catch (...) {
    recording_ = saved_recording;
    in_recorded_backward_ = saved_flag;
    throw;
  }
  recording_ = saved_recording;
  in_recorded_backward_ = saved_flag;

  std::vector<Var> result;
  result.reserve(inputs.size());
  for (const Var& in : inputs) {
    if (in.node() < end && adj[in.node()]) {
      result.push_back(*adj[in.node()]);
    } else {
      result.emplace_back(Tensor::zeros(in.shape()));
    }
  }
  return result;
}

bool Tape::depends_on_recorded_backward(const Var& v) const {
  if (!v.tracked() || v.tape() != this) return false;
  std::vector<bool> seen(v.node() + 1, false);
  std::vector<std::size_t> stack{v.node()};
  while (!stack.empty()) {
    std::size_t id = stack.back();
    stack.pop_back();
    if (seen[id]) continue;
    seen[id] = true;
    if (nodes_[id].from_backward) return true;
    for (const Var& in : nodes_[id].inputs) {
      if (in.tracked() && !seen[in.node()]) stack.push_back(in.node());
    }
  }
  return false;
}

std::vector<Tensor> values_of(std::span<const Var> vars) {
  std::vector<Tensor> out;
  out.reserve(vars.size());
  for (const Var& v : vars) out.push_back(v.value());
  return out;
}

std::vector<Tensor> grad(const Var& output, std::span<const Var> inputs) {
  if (!output.tracked()) throw GraphError("grad: output is not recorded");
  return values_of(output.tape()->backward(output, inputs, DiffMode::kFirstOrder));
}

std::vector<Var> grad_recorded(const Var& output, std::span<const Var> inputs) {
  if (!output.tracked()) throw GraphError("grad_recorded: output is not recorded");
  return output.tape()->backward(output, inputs, DiffMode::kHigherOrder);
}

std::vector<Tensor> grad_of_grad(const Var& objective,
                                 std::span<const Var> inputs) {
  if (!objective.tracked()) throw GraphError("grad_of_grad: objective is not recorded");
  if (!objective.tape()->depends_on_recorded_backward(objective)) {
    throw GraphError(
        "grad_of_grad: objective does not flow through a recorded inner "
        "gradient (inner gradient was computed in first-order mode)");
  }
  return grad(objective, inputs);
}

Var add(const Var& a, const Var& b) {
  Tensor v = add(a.value(), b.value());
  if (Tape* t = recording_tape({&a, &b})) return t->record(Op::kAdd, std::move(v), {a, b});
  return Var(std::move(v));
}

Var sub(const Var& a, const Var& b) {
  Tensor v = sub(a.value(), b.value());
  if (Tape* t = recording_tape({&a, &b})) return t->record(Op::kSub, std::move(v), {a, b});
  return Var(std::move(v));
}

Var mul(const Var& a, const Var& b) {
  Tensor v = mul(a.value(), b.value());
  if (Tape* t = recording_tape({&a, &b})) return t->record(Op::kMul, std::move(v), {a, b});
  return Var(std::move(v));
}

Var scale(const Var& a, double factor) {
  Tensor v = scale(a.value(), factor);
  if (Tape* t = recording_tape({&a})) return t->record(Op::kScale, std::move(v), {a}, factor);
  return Var(std::move(v));
}

Var add_scalar(const Var& a, double value) {
  Tensor v = add_scalar(a.value(), value);
  if (Tape* t = recording_tape({&a})) return t->record(Op::kAddScalar, std::move(v), {a}, value);
  return Var(std::move(v));
}

Var tanh(const Var& a) {
  Tensor v = tanh(a.value());
  if (Tape* t = recording_tape({&a})) return t->record(Op::kTanh, std::move(v), {a});
  return Var(std::move(v));
}

Var exp(const Var& a) {
  Tensor v = exp(a.value());
  if (Tape* t = recording_tape({&a})) return t->record(Op::kExp, std::move(v), {a});
  return Var(std::move(v));
}

Var pow(const Var& a, double exponent) {
  Tensor v = pow(a.value(), exponent);
  if (Tape* t = recording_tape({&a})) return t->record(Op::kPow, std::move(v), {a}, exponent);
  return Var(std::move(v));
}

Var matmul(const Var& a, const Var& b) {
  Tensor v = matmul(a.value(), b.value());
  if (Tape* t = recording_tape({&a, &b})) return t->record(Op::kMatMul, std::move(v), {a, b});
  return Var(std::move(v));
}

Var transpose(const Var& a) {
  Tensor v = transpose(a.value());
  if (Tape* t = recording_tape({&a})) return t->record(Op::kTranspose, std::move(v), {a});
  return Var(std::move(v));
}

Var sum_rows(const Var& a) {
  Tensor v = sum_rows(a.value());
  if (Tape* t = recording_tape({&a})) return t->record(Op::kSumRows, std::move(v), {a});
  return Var(std::move(v));
}

Var sum_cols(const Var& a) {
  Tensor v = sum_cols(a.value());
  if (Tape* t = recording_tape({&a})) return t->record(Op::kSumCols, std::move(v), {a});
  return Var(std::move(v));
}

Var sum_all(const Var& a) {
  Tensor v = sum_all(a.value());
  if (Tape* t = recording_tape({&a})) return t->record(Op::kSumAll, std::move(v), {a});
  return Var(std::move(v));
}

Var broadcast_rows(const Var& v, std::size_t m) {
  Tensor r = broadcast_rows(v.value(), m);
  if (Tape* t = recording_tape({&v})) return t->record(Op::kBroadcastRows, std::move(r), {v}, 0.0, m);
  return Var(std::move(r));
}

Var broadcast_cols(const Var& v, std::size_t n) {
  Tensor r = broadcast_cols(v.value(), n);
  if (Tape* t = recording_tape({&v})) return t->record(Op::kBroadcastCols, std::move(r), {v}, 0.0, n);
  return Var(std::move(r));
}

Var broadcast_scalar(const Var& s, const Shape& shape) {
  Tensor r = broadcast_scalar(s.value(), shape);
  if (Tape* t = recording_tape({&s})) return t->record(Op::kBroadcastScalar, std::move(r), {s});
  return Var(std::move(r));
}

Var log_softmax_rows(const Var& a) {
  Tensor v = log_softmax_rows(a.value());
  if (Tape* t = recording_tape({&a})) return t->record(Op::kLogSoftmaxRows, std::move(v), {a});
  return Var(std::move(v));
}

Var pick(const Var& a, std::span<const std::size_t> indices) {
  Tensor v = pick(a.value(), indices);
  if (Tape* t = recording_tape({&a})) {
    return t->record(Op::kPick, std::move(v), {a}, 0.0, 0, share_indices(indices));
  }
  return Var(std::move(v));
}

Var scatter(const Var& v, std::span<const std::size_t> indices, std::size_t n) {
  Tensor r = scatter(v.value(), indices, n);
  if (Tape* t = recording_tape({&v})) {
    return t->record(Op::kScatter, std::move(r), {v}, 0.0, n, share_indices(indices));
  }
  return Var(std::move(r));
}

Var stop_gradient(const Var& a) {
  if (Tape* t = recording_tape({&a})) return t->record(Op::kStopGradient, a.value(), {a});
  return Var(a.value());
}

Var l2_normalize_rows(const Var& x, double eps) {
  // Validates norms and raises DegenerateError on a collapsed row.
  (void)l2_normalize_rows(x.value(), eps);
  const std::size_t n = x.shape()[1];
  Var inv_norm = pow(sum_cols(mul(x, x)), -0.5);
  return mul(x, broadcast_cols(inv_norm, n));
}

Var cross_entropy_sum(const Var& logits, std::span<const std::size_t> labels) {
  return scale(sum_all(pick(log_softmax_rows(logits), labels)), -1.0);
}

}  // namespace mfr
