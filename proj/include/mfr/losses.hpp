// Copyright 2026 The MFR Authors.
// SPDX-License-Identifier: Apache-2.0
//
// Embedding losses over a batch of B identities, each contributing one
// gallery and one probe embedding. Row i of gallery and probe belong to the
// same identity and that identity's class index within the batch is i.

#ifndef MFR_LOSSES_HPP_
#define MFR_LOSSES_HPP_

#include <cstdint>
#include <utility>
#include <vector>

#include "mfr/autodiff.hpp"

namespace mfr {

struct PairBatch {
  Var gallery;  // [B x C], raw embeddings
  Var probe;    // [B x C]
  std::vector<std::uint64_t> identity_labels;
  std::vector<std::uint32_t> domain_tags;

  std::size_t size() const { return identity_labels.size(); }
  // DimensionError / ConfigError when rows, labels and tags disagree or a
  // label repeats.
  void validate() const;
};

// Cosine-similarity thresholds for hard-pair mining; tau_n <= tau_p.
class Thresholds {
 public:
  Thresholds(double tau_p, double tau_n);
  double tau_p() const { return tau_p_; }
  double tau_n() const { return tau_n_; }

 private:
  double tau_p_;
  double tau_n_;
};

struct HardPairs {
  std::vector<std::size_t> positives;                          // M[i,i] < tau_p
  std::vector<std::pair<std::size_t, std::size_t>> negatives;  // i != j, M[i,j] > tau_n
};

// Row-major scan of a similarity matrix.
HardPairs mine_hard_pairs(const Tensor& similarity, const Thresholds& t);

// Pulls hard positives together and pushes hard negatives apart on the unit
// sphere. An empty positive or negative set contributes exactly 0. If
// `mined` is non-null it receives the mined pairs.
Var hard_pair_loss(const PairBatch& batch, const Thresholds& t,
                   HardPairs* mined = nullptr);

// In-batch classification against templates W = normalize((g + p) / 2).
// With detach_template the templates are constants for differentiation.
Var soft_classification_loss(const PairBatch& batch, double s,
                             bool detach_template = true);

// Dispersion of per-domain mean embeddings around their common center,
// scaled by s^2. Exactly 0 for a single domain.
Var domain_alignment_loss(const PairBatch& batch, double s);

struct LossConfig {
  double s = 64.0;
  double tau_p = 0.3;
  double tau_n = 0.04;
  bool use_hp = true;
  bool use_cls = true;
  bool use_da = true;
  double da_weight = 1.0;
  bool detach_template = true;
};

struct LossBreakdown {
  Var total;
  double hp = 0.0;
  double cls = 0.0;
  double da = 0.0;
  std::size_t num_positive = 0;
  std::size_t num_negative = 0;
};

// hp + cls + da_weight * da (disabled components omitted).
LossBreakdown meta_train_loss(const PairBatch& batch, const LossConfig& cfg);
// hp + cls; the test side sees a single domain so alignment is not used.
LossBreakdown meta_test_loss(const PairBatch& batch, const LossConfig& cfg);

}  // namespace mfr

#endif  // MFR_LOSSES_HPP_
