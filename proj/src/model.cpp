// Copyright 2026 The MFR Authors.
// SPDX-License-Identifier: Apache-2.0

#include "mfr/model.hpp"

#include <cmath>
#include <cstring>
#include <random>

#include "mfr/binary_io.hpp"
#include "mfr/error.hpp"

namespace mfr {
namespace {

constexpr char kCheckpointMagic[8] = {'M', 'F', 'R', 'C', 'K', 'P', 'T', '\0'};

void require_aligned(const Shape& a, const Shape& b, std::size_t i) {
  if (a != b) {
    throw DimensionError("parameter " + std::to_string(i) +
                         " misaligned: " + shape_to_string(a) + " vs " +
                         shape_to_string(b));
  }
}

}  // namespace

void Architecture::validate() const {
  if (widths.size() < 2) throw ConfigError("architecture needs at least two widths");
  for (auto w : widths) {
    if (w == 0) throw ConfigError("architecture widths must be positive");
  }
  if (nonlinearity != "tanh") {
    throw ConfigError("unsupported nonlinearity '" + nonlinearity + "'");
  }
}

ParameterSet::ParameterSet(std::vector<std::string> names,
                           std::vector<Tensor> tensors)
    : names_(std::move(names)), tensors_(std::move(tensors)) {
  if (names_.size() != tensors_.size()) {
    throw DimensionError("parameter names and tensors differ in count");
  }
  for (std::size_t i = 0; i < names_.size(); ++i) {
    for (std::size_t j = 0; j < i; ++j) {
      if (names_[i] == names_[j]) throw ConfigError("duplicate parameter name " + names_[i]);
    }
  }
}

std::size_t ParameterSet::num_scalars() const {
  std::size_t n = 0;
  for (const auto& t : tensors_) n += t.size();
  return n;
}

bool ParameterSet::aligned_with(std::span<const Tensor> other) const {
  if (other.size() != tensors_.size()) return false;
  for (std::size_t i = 0; i < other.size(); ++i) {
    if (!tensors_[i].same_shape(other[i])) return false;
  }
  return true;
}

bool ParameterSet::identical(const ParameterSet& other) const {
  if (names_ != other.names_) return false;
  for (std::size_t i = 0; i < tensors_.size(); ++i) {
    if (!tensors_[i].identical(other.tensors_[i])) return false;
  }
  return true;
}

ParameterSet axpy(const ParameterSet& theta, double scale_by,
                  std::span<const Tensor> g) {
  if (g.size() != theta.size()) {
    throw DimensionError("axpy: " + std::to_string(g.size()) +
                         " gradients for " + std::to_string(theta.size()) +
                         " parameters");
  }
  std::vector<Tensor> out;
  out.reserve(theta.size());
  for (std::size_t i = 0; i < theta.size(); ++i) {
    require_aligned(theta[i].shape(), g[i].shape(), i);
    out.push_back(add(theta[i], scale(g[i], scale_by)));
  }
  return ParameterSet(theta.names(), std::move(out));
}

std::vector<Var> axpy(std::span<const Var> theta, double scale_by,
                      std::span<const Var> g) {
  if (g.size() != theta.size()) {
    throw DimensionError("axpy: gradient count does not match parameters");
  }
  std::vector<Var> out;
  out.reserve(theta.size());
  for (std::size_t i = 0; i < theta.size(); ++i) {
    require_aligned(theta[i].shape(), g[i].shape(), i);
    out.push_back(add(theta[i], scale(g[i], scale_by)));
  }
  return out;
}

EmbeddingModel::EmbeddingModel(Architecture arch) : arch_(std::move(arch)) {
  arch_.validate();
  for (std::size_t l = 0; l < arch_.num_layers(); ++l) {
    names_.push_back("layer" + std::to_string(l) + ".weight");
    shapes_.push_back({arch_.widths[l], arch_.widths[l + 1]});
    names_.push_back("layer" + std::to_string(l) + ".bias");
    shapes_.push_back({arch_.widths[l + 1]});
  }
}

ParameterSet EmbeddingModel::init_params(std::uint64_t seed) const {
  std::mt19937_64 rng(seed);
  std::vector<Tensor> tensors;
  for (std::size_t l = 0; l < arch_.num_layers(); ++l) {
    const std::size_t fan_in = arch_.widths[l], fan_out = arch_.widths[l + 1];
    const double bound = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
    std::uniform_real_distribution<double> dist(-bound, bound);
    std::vector<double> w(fan_in * fan_out);
    for (auto& v : w) v = dist(rng);
    tensors.emplace_back(Shape{fan_in, fan_out}, std::move(w));
    tensors.push_back(Tensor::zeros({fan_out}));
  }
  return ParameterSet(names_, std::move(tensors));
}

void EmbeddingModel::check_params(std::span<const Var> theta) const {
  if (theta.size() != shapes_.size()) {
    throw DimensionError("model expects " + std::to_string(shapes_.size()) +
                         " parameter tensors, got " + std::to_string(theta.size()));
  }
  for (std::size_t i = 0; i < theta.size(); ++i) {
    require_aligned(theta[i].shape(), shapes_[i], i);
  }
}

Var EmbeddingModel::apply(std::span<const Var> theta, const Var& x) const {
  check_params(theta);
  if (x.shape().size() != 2 || x.shape()[1] != arch_.input_dim()) {
    throw DimensionError("model input " + shape_to_string(x.shape()) +
                         " does not have " + std::to_string(arch_.input_dim()) +
                         " columns");
  }
  const std::size_t batch = x.shape()[0];
  Var h = x;
  for (std::size_t l = 0; l < arch_.num_layers(); ++l) {
    h = add(matmul(h, theta[2 * l]), broadcast_rows(theta[2 * l + 1], batch));
    if (l + 1 < arch_.num_layers()) h = tanh(h);
  }
  return h;
}

Tensor EmbeddingModel::embed(const ParameterSet& theta, const Tensor& x) const {
  std::vector<Var> consts;
  consts.reserve(theta.size());
  for (const auto& t : theta.tensors()) consts.emplace_back(t);
  return apply(consts, Var(x)).value();
}

std::vector<Var> EmbeddingModel::track(Tape& tape, const ParameterSet& theta) {
  std::vector<Var> out;
  out.reserve(theta.size());
  for (const auto& t : theta.tensors()) out.push_back(tape.leaf(t));
  return out;
}

ParameterSet EmbeddingModel::wrap(std::span<const Tensor> tensors) const {
  if (tensors.size() != shapes_.size()) {
    throw DimensionError("wrap: tensor count does not match architecture");
  }
  for (std::size_t i = 0; i < tensors.size(); ++i) {
    require_aligned(tensors[i].shape(), shapes_[i], i);
  }
  return ParameterSet(names_, std::vector<Tensor>(tensors.begin(), tensors.end()));
}

std::vector<std::uint8_t> encode_checkpoint(const Checkpoint& ckpt) {
  io::ByteWriter w;
  w.bytes({reinterpret_cast<const std::uint8_t*>(kCheckpointMagic), 8});
  w.u32(kCheckpointVersion);
  w.u32(static_cast<std::uint32_t>(ckpt.arch.widths.size()));
  for (auto width : ckpt.arch.widths) w.u64(width);
  w.str(ckpt.arch.nonlinearity);
  w.u64(ckpt.config_hash);
  w.u64(ckpt.step);
  const auto& p = ckpt.params;
  w.u32(static_cast<std::uint32_t>(p.size()));
  for (std::size_t i = 0; i < p.size(); ++i) {
    w.str(p.name(i));
    w.u32(static_cast<std::uint32_t>(p[i].rank()));
    for (auto e : p[i].shape()) w.u64(e);
    w.f64s(p[i].data());
  }
  if (ckpt.velocity) {
    if (!p.aligned_with(*ckpt.velocity)) {
      throw DimensionError("checkpoint velocity does not mirror parameters");
    }
    w.u32(1);
    for (const auto& v : *ckpt.velocity) w.f64s(v.data());
  } else {
    w.u32(0);
  }
  auto bytes = w.buffer();
  io::ByteWriter tail;
  tail.u32(io::crc32(bytes));
  bytes.insert(bytes.end(), tail.buffer().begin(), tail.buffer().end());
  return bytes;
}

Checkpoint decode_checkpoint(std::span<const std::uint8_t> bytes) {
  io::ByteReader r(bytes);
  auto magic = r.bytes(8);
  if (std::memcmp(magic.data(), kCheckpointMagic, 8) != 0) {
    throw IoError("not a checkpoint file (bad magic)");
  }
  std::uint32_t version = r.u32();
  if (version != kCheckpointVersion) {
    throw IoError("unsupported checkpoint version " + std::to_string(version));
  }
  if (bytes.size() < 4) throw IoError("truncated checkpoint");
  io::ByteReader tail(bytes.subspan(bytes.size() - 4));
  if (io::crc32(bytes.first(bytes.size() - 4)) != tail.u32()) {
    throw IoError("checkpoint checksum mismatch");
  }

  Checkpoint ckpt;
  std::uint32_t nw = r.u32();
  ckpt.arch.widths.clear();
  for (std::uint32_t i = 0; i < nw; ++i) ckpt.arch.widths.push_back(r.u64());
  ckpt.arch.nonlinearity = r.str();
  ckpt.config_hash = r.u64();
  ckpt.step = r.u64();
  std::uint32_t count = r.u32();
  std::vector<std::string> names;
  std::vector<Tensor> tensors;
  for (std::uint32_t i = 0; i < count; ++i) {
    names.push_back(r.str());
    std::uint32_t rank = r.u32();
    if (rank > 2) throw IoError("checkpoint entry has rank " + std::to_string(rank));
    Shape shape(rank);
    for (auto& e : shape) e = r.u64();
    tensors.emplace_back(shape, r.f64s(shape_numel(shape)));
  }
  ckpt.params = ParameterSet(std::move(names), tensors);
  if (r.u32() == 1) {
    std::vector<Tensor> vel;
    for (const auto& t : tensors) vel.emplace_back(t.shape(), r.f64s(t.size()));
    ckpt.velocity = std::move(vel);
  }
  if (r.remaining() != 4) throw IoError("trailing bytes in checkpoint");
  return ckpt;
}

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt) {
  io::write_file(path, encode_checkpoint(ckpt));
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  return decode_checkpoint(io::read_file(path));
}

}  // namespace mfr
