// Copyright 2026 The MFR Authors.
// SPDX-License-Identifier: Apache-2.0

#include "mfr/losses.hpp"

#include <map>
#include <numeric>
#include <set>

#include "mfr/error.hpp"

namespace mfr {
namespace {

// A +0.0 that stays on the tape of `like`, so the loss can always be
// differentiated even when a term is empty.
Var tracked_zero(const Var& like) {
  return add_scalar(scale(sum_all(like), 0.0), 0.0);
}

std::vector<std::size_t> iota_labels(std::size_t n) {
  std::vector<std::size_t> labels(n);
  std::iota(labels.begin(), labels.end(), std::size_t{0});
  return labels;
}

}  // namespace

void PairBatch::validate() const {
  const auto& gs = gallery.shape();
  if (gs.size() != 2 || gs != probe.shape()) {
    throw DimensionError("pair batch: gallery " + shape_to_string(gs) +
                         " and probe " + shape_to_string(probe.shape()) +
                         " must be equal-shaped matrices");
  }
  if (identity_labels.size() != gs[0] || domain_tags.size() != gs[0]) {
    throw DimensionError("pair batch: labels/tags do not match " +
                         std::to_string(gs[0]) + " rows");
  }
  std::set<std::uint64_t> seen(identity_labels.begin(), identity_labels.end());
  if (seen.size() != identity_labels.size()) {
    throw ConfigError("pair batch: identity labels must be unique");
  }
}

Thresholds::Thresholds(double tau_p, double tau_n) : tau_p_(tau_p), tau_n_(tau_n) {
  if (!(tau_p >= -1.0 && tau_p <= 1.0 && tau_n >= -1.0 && tau_n <= 1.0)) {
    throw ConfigError("thresholds must lie in [-1, 1]");
  }
  if (tau_n > tau_p) throw ConfigError("thresholds require tau_n <= tau_p");
}

HardPairs mine_hard_pairs(const Tensor& similarity, const Thresholds& t) {
  const std::size_t b = similarity.rows();
  if (similarity.cols() != b) throw DimensionError("similarity matrix must be square");
  HardPairs out;
  for (std::size_t i = 0; i < b; ++i) {
    for (std::size_t j = 0; j < b; ++j) {
      const double m = similarity.at(i, j);
      if (i == j) {
        if (m < t.tau_p()) out.positives.push_back(i);
      } else if (m > t.tau_n()) {
        out.negatives.emplace_back(i, j);
      }
    }
  }
  return out;
}

Var hard_pair_loss(const PairBatch& batch, const Thresholds& t, HardPairs* mined) {
  batch.validate();
  const std::size_t b = batch.size();
  Var g = l2_normalize_rows(batch.gallery);
  Var p = l2_normalize_rows(batch.probe);
  Tensor sim = matmul(g.value(), transpose(p.value()));
  HardPairs pairs = mine_hard_pairs(sim, t);

  // Per-pair weights: +1/(2|P|) on hard positives, -1/(2|N|) on hard
  // negatives, 0 elsewhere.
  std::vector<double> w(b * b, 0.0);
  if (!pairs.positives.empty()) {
    const double wp = 1.0 / (2.0 * static_cast<double>(pairs.positives.size()));
    for (auto i : pairs.positives) w[i * b + i] = wp;
  }
  if (!pairs.negatives.empty()) {
    const double wn = -1.0 / (2.0 * static_cast<double>(pairs.negatives.size()));
    for (auto [i, j] : pairs.negatives) w[i * b + j] = wn;
  }
  if (mined) *mined = pairs;
  if (pairs.positives.empty() && pairs.negatives.empty()) return tracked_zero(g);

  // dist[i,j] = |g_i|^2 + |p_j|^2 - 2 <g_i, p_j>
  Var dist = sub(add(broadcast_cols(sum_cols(mul(g, g)), b),
                     broadcast_rows(sum_cols(mul(p, p)), b)),
                 scale(matmul(g, transpose(p)), 2.0));
  return sum_all(mul(Var(Tensor({b, b}, std::move(w))), dist));
}

Var soft_classification_loss(const PairBatch& batch, double s, bool detach_template) {
  batch.validate();
  if (!(s > 0.0)) throw ConfigError("scaling factor s must be positive");
  const std::size_t b = batch.size();
  Var g = l2_normalize_rows(batch.gallery);
  Var p = l2_normalize_rows(batch.probe);
  Var templ;
  try {
    templ = l2_normalize_rows(scale(add(g, p), 0.5));
  } catch (const DegenerateError&) {
    throw DegenerateError("soft classification: degenerate template (gallery + probe ~ 0)");
  }
  if (detach_template) templ = stop_gradient(templ);
  Var wt = transpose(templ);
  auto labels = iota_labels(b);
  Var ce = add(cross_entropy_sum(scale(matmul(g, wt), s), labels),
               cross_entropy_sum(scale(matmul(p, wt), s), labels));
  return scale(ce, 1.0 / (2.0 * static_cast<double>(b)));
}

Var domain_alignment_loss(const PairBatch& batch, double s) {
  batch.validate();
  const std::size_t b = batch.size();
  std::map<std::uint32_t, std::size_t> counts;
  for (auto tag : batch.domain_tags) ++counts[tag];
  Var g = l2_normalize_rows(batch.gallery);
  Var p = l2_normalize_rows(batch.probe);
  if (counts.size() < 2) return tracked_zero(g);

  const std::size_t n = counts.size();
  std::map<std::uint32_t, std::size_t> slot;
  for (const auto& [tag, _] : counts) slot.emplace(tag, slot.size());
  // averaging[j, i] = 1/|domain j| when row i belongs to domain j
  std::vector<double> avg(n * b, 0.0);
  for (std::size_t i = 0; i < b; ++i) {
    const auto tag = batch.domain_tags[i];
    avg[slot[tag] * b + i] = 1.0 / static_cast<double>(counts[tag]);
  }
  // centering = I - 1/n
  std::vector<double> center(n * n, -1.0 / static_cast<double>(n));
  for (std::size_t j = 0; j < n; ++j) center[j * n + j] += 1.0;

  Var centers = matmul(Var(Tensor({n, b}, std::move(avg))), scale(add(g, p), 0.5));
  Var dev = scale(matmul(Var(Tensor({n, n}, std::move(center))), centers), s);
  return scale(sum_all(mul(dev, dev)), 1.0 / static_cast<double>(n));
}

namespace {

LossBreakdown combine(const PairBatch& batch, const LossConfig& cfg, bool with_da) {
  batch.validate();
  LossBreakdown out;
  const Thresholds t(cfg.tau_p, cfg.tau_n);
  std::vector<Var> terms;
  if (cfg.use_hp) {
    HardPairs mined;
    Var hp = hard_pair_loss(batch, t, &mined);
    out.hp = hp.value().item();
    out.num_positive = mined.positives.size();
    out.num_negative = mined.negatives.size();
    terms.push_back(hp);
  }
  if (cfg.use_cls) {
    Var cls = soft_classification_loss(batch, cfg.s, cfg.detach_template);
    out.cls = cls.value().item();
    terms.push_back(cls);
  }
  if (with_da && cfg.use_da) {
    Var da = domain_alignment_loss(batch, cfg.s);
    out.da = da.value().item();
    terms.push_back(cfg.da_weight == 1.0 ? da : scale(da, cfg.da_weight));
  }
  if (terms.empty()) {
    out.total = tracked_zero(batch.gallery);
    return out;
  }
  out.total = terms.front();
  for (std::size_t i = 1; i < terms.size(); ++i) out.total = add(out.total, terms[i]);
  return out;
}

}  // namespace

LossBreakdown meta_train_loss(const PairBatch& batch, const LossConfig& cfg) {
  return combine(batch, cfg, true);
}

LossBreakdown meta_test_loss(const PairBatch& batch, const LossConfig& cfg) {
  return combine(batch, cfg, false);
}

}  // namespace mfr
