// Copyright 2026 The MFR Authors.
// SPDX-License-Identifier: Apache-2.0

#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "mfr/error.hpp"
#include "mfr/losses.hpp"
#include "oracles.hpp"

namespace mfr {
namespace {

PairBatch constant_batch(const Tensor& g, const Tensor& p, std::vector<std::uint32_t> tags) {
  PairBatch b;
  b.gallery = Var(g);
  b.probe = Var(p);
  for (std::size_t i = 0; i < g.rows(); ++i) b.identity_labels.push_back(100 + i);
  b.domain_tags = std::move(tags);
  return b;
}

Tensor random_matrix(std::size_t r, std::size_t c, std::mt19937_64& rng) {
  std::normal_distribution<double> n(0.0, 1.0);
  std::vector<double> v(r * c);
  for (auto& x : v) x = n(rng);
  return Tensor::matrix(r, c, std::move(v));
}

oracle::Rows rows_of(const Tensor& t) {
  return oracle::to_rows({t.data().begin(), t.data().end()}, t.cols());
}

TEST(Mining, PerfectEmbeddingsHaveNoHardPairs) {
  HardPairs h = mine_hard_pairs(Tensor::identity(3), Thresholds(0.3, 0.04));
  EXPECT_TRUE(h.positives.empty());
  EXPECT_TRUE(h.negatives.empty());
}

TEST(Mining, DirectThresholdScan) {
  HardPairs h = mine_hard_pairs(Tensor::matrix(2, 2, {0.1, 0.5, 0.9, 0.2}), Thresholds(0.3, 0.04));
  EXPECT_EQ(h.positives, (std::vector<std::size_t>{0, 1}));
  using P = std::pair<std::size_t, std::size_t>;
  EXPECT_EQ(h.negatives, (std::vector<P>{{0, 1}, {1, 0}}));
}

// tau_p = -1 with tau_n = 1 violates tau_n <= tau_p, so the two extremes are
// checked separately: no cosine lies below -1 or above 1.
TEST(Mining, ExcludingThresholds) {
  std::mt19937_64 rng(1);
  Tensor m = l2_normalize_rows(random_matrix(5, 4, rng));
  Tensor sim = matmul(m, transpose(m));
  EXPECT_TRUE(mine_hard_pairs(sim, Thresholds(-1.0, -1.0)).positives.empty());
  EXPECT_TRUE(mine_hard_pairs(sim, Thresholds(1.0, 1.0)).negatives.empty());
  EXPECT_THROW(Thresholds(-1.0, 1.0), ConfigError);
}

TEST(Mining, ThresholdOrderEnforced) {
  EXPECT_THROW(Thresholds(0.1, 0.2), ConfigError);
}

TEST(HardPairLoss, NoHardPairsIsZero) {
  Tensor e = Tensor::identity(3);
  EXPECT_EQ(hard_pair_loss(constant_batch(e, e, {0, 0, 0}), Thresholds(0.3, 0.04)).value().item(), 0.0);
}

TEST(HardPairLoss, SingleHardPositive) {
  // Rows at angle with cosine m = 0.2 between gallery 0 and probe 0; the
  // other identity is easy and orthogonal to both.
  const double m = 0.2;
  Tensor g = Tensor::matrix(2, 3, {1, 0, 0, 0, 0, 1});
  Tensor p = Tensor::matrix(2, 3, {m, std::sqrt(1 - m * m), 0, 0, 0, 1});
  HardPairs mined;
  double v = hard_pair_loss(constant_batch(g, p, {0, 0}), Thresholds(0.3, 0.04), &mined).value().item();
  EXPECT_EQ(mined.positives.size(), 1u);
  EXPECT_TRUE(mined.negatives.empty());
  EXPECT_NEAR(v, 0.5 * (2 - 2 * m), 1e-12);
  EXPECT_NEAR(v, oracle::hard_pair(rows_of(g), rows_of(p), 0.3, 0.04), 1e-12);
}

TEST(HardPairLoss, MatchesBruteForce) {
  std::mt19937_64 rng(7);
  std::uniform_real_distribution<double> u(-0.5, 0.6);
  for (int trial = 0; trial < 25; ++trial) {
    Tensor g = random_matrix(8, 5, rng);
    Tensor p = random_matrix(8, 5, rng);
    double a = u(rng), b = u(rng);
    Thresholds t(std::max(a, b), std::min(a, b));
    double got = hard_pair_loss(constant_batch(g, p, std::vector<std::uint32_t>(8, 0)), t).value().item();
    EXPECT_NEAR(got, oracle::hard_pair(rows_of(g), rows_of(p), t.tau_p(), t.tau_n()), 1e-12);
  }
}

TEST(SoftClassification, SingleClassIsZero) {
  Tensor g = Tensor::matrix(1, 3, {1, 2, 3});
  Tensor p = Tensor::matrix(1, 3, {0, 1, 1});
  for (double s : {1.0, 64.0}) {
    EXPECT_NEAR(soft_classification_loss(constant_batch(g, p, {0}), s).value().item(), 0.0, 1e-15);
  }
}

TEST(SoftClassification, OrthogonalPairsAtUnitScale) {
  Tensor e = Tensor::identity(2);
  double v = soft_classification_loss(constant_batch(e, e, {0, 0}), 1.0).value().item();
  EXPECT_NEAR(v, -std::log(std::exp(1.0) / (std::exp(1.0) + 1.0)), 1e-12);
  EXPECT_NEAR(v, 0.3133, 5e-5);
}

TEST(SoftClassification, DecreasesWithScaleWhenDiagonalDominates) {
  Tensor g = Tensor::matrix(3, 3, {1, 0.1, 0, 0, 1, 0.2, 0.1, 0, 1});
  Tensor p = Tensor::matrix(3, 3, {1, 0, 0.1, 0.2, 1, 0, 0, 0.1, 1});
  double prev = 1e300;
  for (double s : {0.5, 1.0, 2.0, 4.0, 8.0, 16.0}) {
    double v = soft_classification_loss(constant_batch(g, p, {0, 0, 0}), s).value().item();
    EXPECT_LT(v, prev);
    prev = v;
  }
}

TEST(SoftClassification, MatchesBruteForce) {
  std::mt19937_64 rng(8);
  for (int trial = 0; trial < 10; ++trial) {
    Tensor g = random_matrix(6, 4, rng);
    Tensor p = random_matrix(6, 4, rng);
    for (bool detach : {true, false}) {
      double got = soft_classification_loss(constant_batch(g, p, std::vector<std::uint32_t>(6, 0)), 3.0, detach)
                       .value()
                       .item();
      EXPECT_NEAR(got, oracle::soft_cls(rows_of(g), rows_of(p), 3.0), 1e-12);
    }
  }
}

TEST(SoftClassification, DegenerateTemplateThrows) {
  Tensor g = Tensor::matrix(2, 2, {1, 0, 0, 1});
  Tensor p = Tensor::matrix(2, 2, {-1, 0, 0, 1});
  EXPECT_THROW(soft_classification_loss(constant_batch(g, p, {0, 0}), 1.0), DegenerateError);
}

TEST(DomainAlignment, SingleDomainIsZero) {
  std::mt19937_64 rng(2);
  Tensor g = random_matrix(4, 3, rng);
  EXPECT_EQ(domain_alignment_loss(constant_batch(g, g, {5, 5, 5, 5}), 64.0).value().item(), 0.0);
}

TEST(DomainAlignment, IdenticalCentersIsZero) {
  Tensor g = Tensor::matrix(2, 3, {1, 2, 3, 1, 2, 3});
  EXPECT_NEAR(domain_alignment_loss(constant_batch(g, g, {0, 1}), 64.0).value().item(), 0.0, 1e-20);
}

TEST(DomainAlignment, TwoAxisCenters) {
  Tensor g = Tensor::matrix(2, 3, {1, 0, 0, 0, 1, 0});
  EXPECT_NEAR(domain_alignment_loss(constant_batch(g, g, {0, 1}), 1.0).value().item(), 0.5, 1e-15);
}

TEST(DomainAlignment, MatchesBruteForce) {
  std::mt19937_64 rng(4);
  std::vector<std::uint32_t> tags{0, 0, 1, 2, 2, 2, 1, 0};
  for (int trial = 0; trial < 10; ++trial) {
    Tensor g = random_matrix(8, 5, rng);
    Tensor p = random_matrix(8, 5, rng);
    double got = domain_alignment_loss(constant_batch(g, p, tags), 64.0).value().item();
    double want = oracle::domain_alignment(rows_of(g), rows_of(p), tags, 64.0);
    EXPECT_NEAR(got, want, 1e-12 * std::max(1.0, want));
  }
}

TEST(MetaLosses, SumOfComponentOracles) {
  std::mt19937_64 rng(6);
  std::vector<std::uint32_t> tags{0, 0, 1, 1, 2, 2};
  Tensor g = random_matrix(6, 4, rng);
  Tensor p = random_matrix(6, 4, rng);
  LossConfig cfg;
  cfg.s = 2.0;
  auto rg = rows_of(g), rp = rows_of(p);
  const double hp = oracle::hard_pair(rg, rp, cfg.tau_p, cfg.tau_n);
  const double cls = oracle::soft_cls(rg, rp, cfg.s);
  const double da = oracle::domain_alignment(rg, rp, tags, cfg.s);
  LossBreakdown tr = meta_train_loss(constant_batch(g, p, tags), cfg);
  EXPECT_NEAR(tr.total.value().item(), hp + cls + da, 1e-12);
  EXPECT_EQ(tr.total.value().item(), tr.hp + tr.cls + tr.da);
  LossBreakdown te = meta_test_loss(constant_batch(g, p, tags), cfg);
  EXPECT_NEAR(te.total.value().item(), hp + cls, 1e-12);
  EXPECT_EQ(te.da, 0.0);

  cfg.use_hp = cfg.use_cls = cfg.use_da = false;
  EXPECT_EQ(meta_train_loss(constant_batch(g, p, tags), cfg).total.value().item(), 0.0);
}

TEST(PairBatchValidation, RepeatedLabelRejected) {
  Tensor e = Tensor::identity(2);
  PairBatch b = constant_batch(e, e, {0, 0});
  b.identity_labels = {7, 7};
  EXPECT_THROW(b.validate(), ConfigError);
  b.identity_labels = {7};
  EXPECT_THROW(b.validate(), DimensionError);
}

}  // namespace
}  // namespace mfr
