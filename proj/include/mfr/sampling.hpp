// Copyright 2026 The MFR Authors.
// SPDX-License-Identifier: Apache-2.0
//
// Domain-level episodic sampling. A meta-batch holds one episode per source
// domain; in each episode some domains play meta-train and the rest of the
// selection plays meta-test.

#ifndef MFR_SAMPLING_HPP_
#define MFR_SAMPLING_HPP_

#include <cstdint>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "mfr/synth_data.hpp"
#include "mfr/tensor.hpp"

namespace mfr {

struct SamplingStrategy {
  enum class Kind {
    kFull,    // N-1 meta-train domains, 1 meta-test, every domain tested once
    kFixed,   // m meta-train, n meta-test (SmTn)
    kRandom,  // m uniform in [1, N-1] per episode, 1 meta-test
    kPooled,  // one episode, no split: identities pooled across all domains
  };
  Kind kind = Kind::kFull;
  std::size_t train_domains = 0;  // kFixed only
  std::size_t test_domains = 1;   // kFixed only

  static SamplingStrategy full() { return {}; }
  static SamplingStrategy random() { return {Kind::kRandom, 0, 1}; }
  static SamplingStrategy pooled() { return {Kind::kPooled, 0, 0}; }

  // "full", "rand", "pooled" or "S<m>T<n>".
  std::string to_string() const;
  static SamplingStrategy parse(const std::string& text);
  bool operator==(const SamplingStrategy&) const = default;
};

// SmTn. ConfigError unless m >= 1, n >= 1 and m + n <= num_domains.
SamplingStrategy strategy_variants(std::size_t m, std::size_t n,
                                   std::size_t num_domains);

// Raw observation pairs; row i of gallery and probe is identity i.
struct PairSample {
  Tensor gallery;  // [B x D_obs]
  Tensor probe;    // [B x D_obs]
  std::vector<std::uint64_t> identity_labels;
  std::vector<std::uint32_t> domain_tags;
  // Observation indices used for each row, for invariant checks.
  std::vector<std::pair<std::uint32_t, std::uint32_t>> observation_indices;

  std::size_t size() const { return identity_labels.size(); }
};

struct Episode {
  std::vector<std::uint32_t> train_domains;  // domain ids
  std::vector<std::uint32_t> test_domains;
  PairSample meta_train;
  PairSample meta_test;
};

struct MetaBatch {
  std::vector<Episode> episodes;
};

// Splits `total` across `parts` as evenly as possible; the remainder goes to
// parts chosen by rng.
std::vector<std::size_t> allocate_evenly(std::size_t total, std::size_t parts,
                                         std::mt19937_64& rng);

// Draws per-domain identity counts without replacement and two distinct
// observations per identity, the first of which is the gallery.
// CapacityError naming the domain if it has too few identities.
PairSample sample_pairs(std::span<const DomainDataset* const> domains,
                        std::span<const std::size_t> counts,
                        std::mt19937_64& rng);

MetaBatch build_meta_batch(std::span<const DomainDataset> domains,
                           std::size_t batch_size, std::mt19937_64& rng,
                           const SamplingStrategy& strategy = {});

}  // namespace mfr

#endif  // MFR_SAMPLING_HPP_
