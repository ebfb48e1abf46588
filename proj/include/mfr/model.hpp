// Copyright 2026 The MFR Authors.
// SPDX-License-Identifier: Apache-2.0

#ifndef MFR_MODEL_HPP_
#define MFR_MODEL_HPP_

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "mfr/autodiff.hpp"
#include "mfr/tensor.hpp"

namespace mfr {

// Layer widths from input to output, e.g. {64, 128, 128, 64}. Hidden layers
// use the nonlinearity; the last layer is linear.
struct Architecture {
  std::vector<std::size_t> widths{64, 128, 128, 64};
  std::string nonlinearity = "tanh";

  std::size_t input_dim() const { return widths.front(); }
  std::size_t output_dim() const { return widths.back(); }
  std::size_t num_layers() const { return widths.size() - 1; }
  // ConfigError unless there are >= 2 positive widths and a known
  // nonlinearity.
  void validate() const;

  bool operator==(const Architecture&) const = default;
};

// Named, ordered parameter tensors. Layer l contributes "layer<l>.weight"
// [in x out] followed by "layer<l>.bias" [out].
class ParameterSet {
 public:
  ParameterSet() = default;
  ParameterSet(std::vector<std::string> names, std::vector<Tensor> tensors);

  std::size_t size() const { return tensors_.size(); }
  const std::string& name(std::size_t i) const { return names_[i]; }
  const Tensor& operator[](std::size_t i) const { return tensors_[i]; }
  const std::vector<std::string>& names() const { return names_; }
  const std::vector<Tensor>& tensors() const { return tensors_; }
  std::size_t num_scalars() const;

  // Same names and shapes.
  bool aligned_with(std::span<const Tensor> other) const;
  bool identical(const ParameterSet& other) const;

 private:
  std::vector<std::string> names_;
  std::vector<Tensor> tensors_;
};

// theta + scale * g, entry by entry. DimensionError on misalignment.
ParameterSet axpy(const ParameterSet& theta, double scale,
                  std::span<const Tensor> g);
// Recorded variant used for the inner step theta' = theta - alpha * g.
std::vector<Var> axpy(std::span<const Var> theta, double scale,
                      std::span<const Var> g);

class EmbeddingModel {
 public:
  explicit EmbeddingModel(Architecture arch);

  const Architecture& architecture() const { return arch_; }

  // Glorot-uniform weights in +-sqrt(6 / (fan_in + fan_out)), zero biases.
  ParameterSet init_params(std::uint64_t seed) const;

  // Forward pass on the tape of theta. Output is [batch x C], not
  // normalized.
  Var apply(std::span<const Var> theta, const Var& x) const;
  // Untracked forward pass.
  Tensor embed(const ParameterSet& theta, const Tensor& x) const;

  // theta's tensors as leaves of the tape.
  static std::vector<Var> track(Tape& tape, const ParameterSet& theta);
  ParameterSet wrap(std::span<const Tensor> tensors) const;

 private:
  void check_params(std::span<const Var> theta) const;

  Architecture arch_;
  std::vector<std::string> names_;
  std::vector<Shape> shapes_;
};

// Checkpoint container. Layout (all integers and floats little-endian):
//
//   magic        8 bytes  "MFRCKPT\0"
//   version      u32      kCheckpointVersion
//   width count  u32, then each width as u64
//   nonlinearity u32 length + bytes
//   config hash  u64
//   step         u64
//   entry count  u32, then per entry:
//                  name (u32 length + bytes), rank u32, extents u64...,
//                  values f64...
//   velocity     u32 flag (0/1); when 1, one f64 block per entry in entry
//                order with the entry's element count
//   crc32        u32 over every preceding byte
inline constexpr std::uint32_t kCheckpointVersion = 1;

struct Checkpoint {
  Architecture arch;
  std::uint64_t config_hash = 0;
  std::uint64_t step = 0;
  ParameterSet params;
  std::optional<std::vector<Tensor>> velocity;
};

std::vector<std::uint8_t> encode_checkpoint(const Checkpoint& ckpt);
Checkpoint decode_checkpoint(std::span<const std::uint8_t> bytes);
void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt);
Checkpoint load_checkpoint(const std::filesystem::path& path);

}  // namespace mfr

#endif  // MFR_MODEL_HPP_
