// Copyright 2026 The MFR Authors.
// SPDX-License-Identifier: Apache-2.0
//
// Multi-domain identity data with a single domain-shift knob.
//
// Each identity has a latent z drawn uniformly from the unit sphere in
// R^latent_dim. Domain d observes it through T_d = (1 - shift) E + shift Q_d,
// where E zero-pads into R^observation_dim and Q_d has random orthonormal
// columns, plus isotropic Gaussian noise of scale noise_sigma.

#ifndef MFR_SYNTH_DATA_HPP_
#define MFR_SYNTH_DATA_HPP_

#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include "mfr/tensor.hpp"

namespace mfr {

struct GeneratorConfig {
  std::uint32_t num_domains = 5;
  std::uint32_t identities_per_domain = 300;
  std::uint32_t observations_per_identity = 2;
  std::uint32_t latent_dim = 16;
  std::uint32_t observation_dim = 64;
  double noise_sigma = 0.1;
  double shift = 0.6;
  std::uint64_t seed = 2019;

  // ConfigError naming the offending field.
  void validate() const;
  bool operator==(const GeneratorConfig&) const = default;
};

struct Identity {
  std::uint64_t id = 0;  // unique across all domains
  Tensor observations;   // [count x observation_dim]

  std::size_t num_observations() const { return observations.rows(); }
};

struct DomainDataset {
  std::uint32_t domain_id = 0;
  std::vector<Identity> identities;

  std::size_t observation_dim() const;
};

struct Dataset {
  GeneratorConfig config;
  std::vector<DomainDataset> domains;

  const DomainDataset& domain(std::uint32_t id) const;  // ProtocolError if absent
};

std::vector<DomainDataset> generate(const GeneratorConfig& cfg);

// Checks the structural invariants: >= 2 observations per identity,
// consistent dims, identity ids disjoint across domains.
void validate_domains(std::span<const DomainDataset> domains);

// File layout (little-endian):
//
//   magic    8 bytes "MFRDATA\0"
//   version  u32 kDatasetVersion
//   config   num_domains u32, identities_per_domain u32,
//            observations_per_identity u32, latent_dim u32,
//            observation_dim u32, noise_sigma f64, shift f64, seed u64
//   domains  u32 count; per domain: domain id u32, identity count u32; per
//            identity: global id u64, observation count u32, then
//            count * observation_dim f64 values, row-major
//   crc32    u32 over every preceding byte
inline constexpr std::uint32_t kDatasetVersion = 1;

std::vector<std::uint8_t> encode_dataset(const GeneratorConfig& cfg,
                                         std::span<const DomainDataset> domains);
Dataset decode_dataset(std::span<const std::uint8_t> bytes);
void save_dataset(const std::filesystem::path& path, const GeneratorConfig& cfg,
                  std::span<const DomainDataset> domains);
Dataset load_dataset(const std::filesystem::path& path);

}  // namespace mfr

#endif  // MFR_SYNTH_DATA_HPP_
