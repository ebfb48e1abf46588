// Copyright 2026 The MFR Authors.
// SPDX-License-Identifier: Apache-2.0

#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "mfr/error.hpp"
#include "mfr/eval.hpp"
#include "oracles.hpp"

namespace mfr {
namespace {

// Single linear layer with identity weights: embeddings equal inputs.
struct IdentityModel {
  explicit IdentityModel(std::size_t d) : model(Architecture{{d, d}, "tanh"}) {
    std::vector<Tensor> t{Tensor::identity(d), Tensor::zeros({d})};
    theta = model.wrap(t);
  }
  EmbeddingModel model;
  ParameterSet theta;
};

TEST(ScoreAll, SelfAndOrthogonal) {
  IdentityModel im(3);
  Tensor g = Tensor::matrix(2, 3, {1, 2, 3, 0, 0, 1});
  Tensor p = Tensor::matrix(2, 3, {2, 4, 6, 1, 0, 0});
  Tensor s = score_all(im.model, im.theta, g, p);
  EXPECT_NEAR(s.at(0, 0), 1.0, 1e-15);
  EXPECT_EQ(s.at(1, 1), 0.0);
}

TEST(ScoreAll, MatchesPairwiseDots) {
  IdentityModel im(4);
  std::mt19937_64 rng(1);
  std::normal_distribution<double> n;
  std::vector<double> gv(8), pv(12);
  for (auto& v : gv) v = n(rng);
  for (auto& v : pv) v = n(rng);
  Tensor s = score_all(im.model, im.theta, Tensor::matrix(2, 4, gv), Tensor::matrix(3, 4, pv));
  auto gr = oracle::to_rows(gv, 4), pr = oracle::to_rows(pv, 4);
  ASSERT_EQ(s.shape(), (Shape{3, 2}));
  for (std::size_t i = 0; i < 3; ++i) {
    for (std::size_t j = 0; j < 2; ++j) {
      EXPECT_NEAR(s.at(i, j), oracle::dot(oracle::normalized(pr[i]), oracle::normalized(gr[j])), 1e-14);
    }
  }
}

TEST(VrAtFar, TiedImpostors) {
  std::vector<double> gen{0.9, 0.8};
  std::vector<double> imp(100, 0.1);
  EXPECT_EQ(vr_at_far(gen, imp, 1e-2), 1.0);
  EXPECT_EQ(oracle::vr_at_far(gen, imp, 1e-2), 1.0);
}

TEST(VrAtFar, InvertedScores) {
  std::vector<double> gen{0.1, 0.2, 0.3};
  std::vector<double> imp;
  for (int i = 0; i < 200; ++i) imp.push_back(0.5 + i * 1e-3);
  for (double far : {0.005, 0.01, 0.1, 0.5}) EXPECT_EQ(vr_at_far(gen, imp, far), 0.0);
}

TEST(VrAtFar, InsufficientImpostorsNamesCount) {
  std::vector<double> gen{0.5};
  std::vector<double> imp(50, 0.1);
  try {
    vr_at_far(gen, imp, 1e-2);
    FAIL();
  } catch (const ProtocolError& e) {
    EXPECT_NE(std::string(e.what()).find("100"), std::string::npos) << e.what();
  }
}

TEST(VrAtFar, IdenticalDistributionsGiveFar) {
  std::mt19937_64 rng(2);
  std::normal_distribution<double> n;
  const std::size_t g_count = 20000;
  std::vector<double> gen(g_count), imp(20000);
  for (auto& v : gen) v = n(rng);
  for (auto& v : imp) v = n(rng);
  for (double far : {1e-2, 1e-3}) {
    const double sigma = std::sqrt(far * (1 - far) / static_cast<double>(g_count));
    // Threshold estimation adds the same order of error as the genuine side.
    EXPECT_NEAR(vr_at_far(gen, imp, far), far, 3.0 * std::sqrt(2.0) * sigma);
  }
}

TEST(VrAtFar, InvariantUnderIncreasingTransform) {
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> u(-1, 1);
  std::vector<double> gen(300), imp(3000);
  for (auto& v : gen) v = u(rng) + 0.4;
  for (auto& v : imp) v = u(rng);
  auto f = [](double x) { return std::exp(3 * x) + x; };
  std::vector<double> g2, i2;
  for (double v : gen) g2.push_back(f(v));
  for (double v : imp) i2.push_back(f(v));
  for (double far : {1e-2, 1e-3}) EXPECT_EQ(vr_at_far(gen, imp, far), vr_at_far(g2, i2, far));
}

TEST(Rank1, PerfectAndAdversarial) {
  std::vector<std::uint64_t> labels{1, 2, 3};
  Tensor perfect = Tensor::matrix(3, 3, {1, 0, 0, 0, 1, 0, 0, 0, 1});
  EXPECT_EQ(rank1(perfect, labels, labels), 1.0);
  Tensor wrong = Tensor::matrix(3, 3, {0, 1, 0, 0, 0, 1, 1, 0, 0});
  EXPECT_EQ(rank1(wrong, labels, labels), 0.0);
  std::vector<std::uint64_t> missing{1, 2, 9};
  EXPECT_THROW(rank1(perfect, missing, labels), ProtocolError);
}

TEST(Rank1, MatchesArgmaxScan) {
  std::mt19937_64 rng(4);
  std::uniform_int_distribution<int> q(0, 4);  // coarse values create ties
  std::vector<std::uint64_t> labels(10);
  for (std::size_t i = 0; i < 10; ++i) labels[i] = 50 + i;
  for (int trial = 0; trial < 20; ++trial) {
    std::vector<double> v(100);
    for (auto& x : v) x = q(rng) * 0.25;
    EXPECT_EQ(rank1(Tensor::matrix(10, 10, v), labels, labels),
              oracle::rank1(oracle::to_rows(v, 10), labels, labels));
  }
}

TEST(Rank1, InvariantUnderPerProbeTransform) {
  std::mt19937_64 rng(5);
  std::normal_distribution<double> n;
  std::vector<std::uint64_t> labels{4, 5, 6, 7};
  std::vector<double> v(16), w(16);
  for (auto& x : v) x = n(rng);
  for (std::size_t r = 0; r < 4; ++r) {
    for (std::size_t c = 0; c < 4; ++c) w[r * 4 + c] = (r + 1.0) * v[r * 4 + c] + 10.0 * r;
  }
  EXPECT_EQ(rank1(Tensor::matrix(4, 4, v), labels, labels), rank1(Tensor::matrix(4, 4, w), labels, labels));
}

TEST(Auc, IdenticalDistributionsNearHalf) {
  std::mt19937_64 rng(6);
  std::normal_distribution<double> n;
  std::vector<double> g2(10000), i2(10000);
  for (auto& v : g2) v = n(rng);
  for (auto& v : i2) v = n(rng);
  EXPECT_NEAR(roc_auc(g2, i2), 0.5, 0.02);
  EXPECT_EQ(roc_auc(g2, i2), oracle::auc(g2, i2));
}

GeneratorConfig eval_data(double shift, double sigma) {
  GeneratorConfig c;
  c.num_domains = 2;
  c.identities_per_domain = 20;
  c.observations_per_identity = 3;
  c.latent_dim = 4;
  c.observation_dim = 10;
  c.noise_sigma = sigma;
  c.shift = shift;
  c.seed = 8;
  return c;
}

TEST(Evaluate, NoiselessUntrainedIsPerfect) {
  auto doms = generate(eval_data(0.0, 0.0));
  EmbeddingModel m(Architecture{{10, 16, 8}, "tanh"});
  EvalReport r = evaluate(m, m.init_params(1), doms[1], ProtocolConfig{{1e-2}, "none", 1});
  EXPECT_EQ(r.rank1, 1.0);
}

TEST(Evaluate, MatchesStraightLineReimplementation) {
  auto doms = generate(eval_data(0.6, 0.3));
  EmbeddingModel m(Architecture{{10, 16, 8}, "tanh"});
  ParameterSet th = m.init_params(2);
  ProtocolConfig pc{{1e-2, 5e-2, 1e-1}, "none", 1};
  EvalReport r = evaluate(m, th, doms[1], pc);

  oracle::Rows gal, pro;
  std::vector<std::uint64_t> gl, pl;
  for (const auto& id : doms[1].identities) {
    Tensor e = m.embed(th, id.observations);
    for (std::size_t k = 0; k < e.rows(); ++k) {
      std::vector<double> row(e.cols());
      for (std::size_t c = 0; c < e.cols(); ++c) row[c] = e.at(k, c);
      (k == 0 ? gal : pro).push_back(oracle::normalized(row));
      (k == 0 ? gl : pl).push_back(id.id);
    }
  }
  oracle::Rows scores;
  std::vector<double> gen, imp;
  for (std::size_t p = 0; p < pro.size(); ++p) {
    scores.emplace_back();
    for (std::size_t g = 0; g < gal.size(); ++g) {
      const double s = oracle::dot(pro[p], gal[g]);
      scores.back().push_back(s);
      (pl[p] == gl[g] ? gen : imp).push_back(s);
    }
  }
  EXPECT_EQ(r.num_gallery, 20u);
  EXPECT_EQ(r.num_probes, 40u);
  EXPECT_EQ(r.num_genuine, gen.size());
  EXPECT_EQ(r.num_impostor, imp.size());
  EXPECT_NEAR(r.rank1, oracle::rank1(scores, pl, gl), 0.0);
  EXPECT_NEAR(r.auc, oracle::auc(gen, imp), 1e-12);
  for (double far : pc.far_levels) EXPECT_NEAR(r.vr(far), oracle::vr_at_far(gen, imp, far), 0.0);
  EXPECT_GE(r.vr(1e-1), r.vr(5e-2));
  EXPECT_GE(r.vr(5e-2), r.vr(1e-2));

  EvalReport again = evaluate(m, th, doms[1], pc);
  EXPECT_EQ(r.to_key_value(), again.to_key_value());
  EXPECT_THROW(r.vr(0.3), ProtocolError);
}

TEST(Evaluate, AugmentationConcatenates) {
  auto doms = generate(eval_data(0.6, 0.3));
  EmbeddingModel m(Architecture{{10, 8}, "tanh"});
  ParameterSet th = m.init_params(3);
  auto aug = make_augmentation("reverse");
  Tensor x = doms[0].identities[0].observations;
  Tensor r = aug(x);
  EXPECT_EQ(r.at(0, 0), x.at(0, 9));
  Tensor s = score_all(m, th, x, x, aug);
  for (std::size_t i = 0; i < x.rows(); ++i) EXPECT_NEAR(s.at(i, i), 1.0, 1e-14);
  EXPECT_THROW(make_augmentation("flip-ish"), ConfigError);
}

}  // namespace
}  // namespace mfr
