// Copyright 2026 The MFR Authors.
// SPDX-License-Identifier: Apache-2.0
//
// Synthetic data generation and episodic sampling.

#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <random>
#include <set>

#include "mfr/binary_io.hpp"
#include "mfr/error.hpp"
#include "mfr/sampling.hpp"
#include "mfr/synth_data.hpp"

namespace mfr {
namespace {

GeneratorConfig small_config() {
  GeneratorConfig c;
  c.num_domains = 3;
  c.identities_per_domain = 20;
  c.observations_per_identity = 3;
  c.latent_dim = 4;
  c.observation_dim = 12;
  c.seed = 5;
  return c;
}

TEST(SynthData, ShapesAndIds) {
  auto doms = generate(small_config());
  ASSERT_EQ(doms.size(), 3u);
  std::set<std::uint64_t> ids;
  for (const auto& d : doms) {
    EXPECT_EQ(d.identities.size(), 20u);
    for (const auto& id : d.identities) {
      EXPECT_EQ(id.observations.shape(), (Shape{3, 12}));
      ids.insert(id.id);
    }
  }
  EXPECT_EQ(ids.size(), 60u);
  validate_domains(doms);
}

TEST(SynthData, Deterministic) {
  auto a = generate(small_config());
  auto b = generate(small_config());
  EXPECT_EQ(encode_dataset(small_config(), a), encode_dataset(small_config(), b));
}

TEST(SynthData, NoiselessObservationsAreIdentical) {
  GeneratorConfig c = small_config();
  c.noise_sigma = 0.0;
  for (const auto& d : generate(c)) {
    for (const auto& id : d.identities) {
      for (std::size_t k = 0; k < 12; ++k) {
        EXPECT_EQ(id.observations.at(0, k), id.observations.at(1, k));
        EXPECT_EQ(id.observations.at(0, k), id.observations.at(2, k));
      }
    }
  }
}

// With zero shift every domain applies the zero-padding map, so a clean
// observation is the unit latent followed by zeros.
TEST(SynthData, ZeroShiftSharesOneTransform) {
  GeneratorConfig c = small_config();
  c.shift = 0.0;
  c.noise_sigma = 0.0;
  for (const auto& d : generate(c)) {
    for (const auto& id : d.identities) {
      double head = 0.0;
      for (std::size_t k = 0; k < 12; ++k) {
        const double v = id.observations.at(0, k);
        if (k >= 4) {
          EXPECT_EQ(v, 0.0);
        } else {
          head += v * v;
        }
      }
      EXPECT_NEAR(head, 1.0, 1e-12);  // latent on the unit sphere
    }
  }
}

TEST(SynthData, FullShiftDecorrelatesDomains) {
  GeneratorConfig c;
  c.num_domains = 2;
  c.identities_per_domain = 1000;
  c.observations_per_identity = 2;
  c.latent_dim = 4;
  c.observation_dim = 128;
  c.noise_sigma = 0.0;
  c.shift = 1.0;
  c.seed = 3;
  auto doms = generate(c);
  // Full shift: each domain's clean observations span an independent random
  // 4-d subspace. Project domain-1 observations onto domain 0's span.
  std::vector<std::vector<double>> q;  // Gram-Schmidt of domain-0 rows
  for (std::size_t i = 0; q.size() < 4; ++i) {
    std::vector<double> v(128);
    for (std::size_t k = 0; k < 128; ++k) v[k] = doms[0].identities[i].observations.at(0, k);
    for (const auto& b : q) {
      double d = 0.0;
      for (std::size_t k = 0; k < 128; ++k) d += v[k] * b[k];
      for (std::size_t k = 0; k < 128; ++k) v[k] -= d * b[k];
    }
    double n = 0.0;
    for (double x : v) n += x * x;
    n = std::sqrt(n);
    if (n < 1e-6) continue;
    for (double& x : v) x /= n;
    q.push_back(v);
  }
  double captured = 0.0;
  for (const auto& id : doms[1].identities) {
    for (const auto& b : q) {
      double d = 0.0;
      for (std::size_t k = 0; k < 128; ++k) d += id.observations.at(0, k) * b[k];
      captured += d * d;
    }
  }
  captured /= 1000.0;
  // Random 4-d subspace of R^128 keeps 4/128 of a unit vector's energy on
  // average; allow a generous margin.
  EXPECT_LT(captured, 0.15);
}

TEST(SynthData, ConfigErrorsNameField) {
  GeneratorConfig c = small_config();
  c.identities_per_domain = 0;
  try {
    c.validate();
    FAIL();
  } catch (const ConfigError& e) {
    EXPECT_NE(std::string(e.what()).find("identities_per_domain"), std::string::npos);
  }
  c = small_config();
  c.observation_dim = 2;
  EXPECT_THROW(c.validate(), ConfigError);
}

TEST(SynthData, FileRoundTripAndCorruption) {
  auto dir = std::filesystem::temp_directory_path() / "mfr_data_roundtrip";
  std::filesystem::create_directories(dir);
  GeneratorConfig c = small_config();
  auto doms = generate(c);
  save_dataset(dir / "d.bin", c, doms);
  Dataset back = load_dataset(dir / "d.bin");
  EXPECT_EQ(back.config, c);
  ASSERT_EQ(back.domains.size(), doms.size());
  for (std::size_t d = 0; d < doms.size(); ++d) {
    for (std::size_t i = 0; i < doms[d].identities.size(); ++i) {
      EXPECT_EQ(back.domains[d].identities[i].id, doms[d].identities[i].id);
      EXPECT_TRUE(back.domains[d].identities[i].observations.identical(doms[d].identities[i].observations));
    }
  }
  auto bytes = encode_dataset(c, doms);
  bytes[100] ^= 1;
  EXPECT_THROW(decode_dataset(bytes), IoError);

  bytes = encode_dataset(c, doms);
  bytes[8] = static_cast<std::uint8_t>(kDatasetVersion + 1);
  bytes.resize(bytes.size() - 4);
  io::ByteWriter w;
  w.bytes(bytes);
  w.u32(io::crc32(bytes));
  try {
    decode_dataset(w.buffer());
    FAIL();
  } catch (const IoError& e) {
    EXPECT_NE(std::string(e.what()).find("version"), std::string::npos);
  }
  std::filesystem::remove_all(dir);
}

TEST(Sampling, FullSplitRotatesTestDomain) {
  GeneratorConfig c = small_config();
  auto doms = generate(c);
  std::mt19937_64 rng(1);
  MetaBatch mb = build_meta_batch(doms, 6, rng);
  ASSERT_EQ(mb.episodes.size(), 3u);
  for (std::uint32_t i = 0; i < 3; ++i) {
    EXPECT_EQ(mb.episodes[i].test_domains, (std::vector<std::uint32_t>{i}));
    EXPECT_EQ(mb.episodes[i].train_domains.size(), 2u);
  }
}

TEST(Sampling, EvenAllocation) {
  std::mt19937_64 rng(1);
  EXPECT_EQ(allocate_evenly(4, 2, rng), (std::vector<std::size_t>{2, 2}));
  auto a = allocate_evenly(7, 3, rng);
  std::sort(a.begin(), a.end());
  EXPECT_EQ(a, (std::vector<std::size_t>{2, 2, 3}));
}

TEST(Sampling, DeterministicUnderSeed) {
  auto doms = generate(small_config());
  std::mt19937_64 r1(9), r2(9);
  MetaBatch a = build_meta_batch(doms, 8, r1);
  MetaBatch b = build_meta_batch(doms, 8, r2);
  for (std::size_t e = 0; e < a.episodes.size(); ++e) {
    EXPECT_TRUE(a.episodes[e].meta_train.gallery.identical(b.episodes[e].meta_train.gallery));
    EXPECT_TRUE(a.episodes[e].meta_test.probe.identical(b.episodes[e].meta_test.probe));
    EXPECT_EQ(a.episodes[e].meta_train.identity_labels, b.episodes[e].meta_train.identity_labels);
  }
}

TEST(Sampling, CapacityErrorNamesDomain) {
  GeneratorConfig c = small_config();
  c.identities_per_domain = 3;
  auto doms = generate(c);
  std::mt19937_64 rng(1);
  try {
    build_meta_batch(doms, 10, rng);
    FAIL();
  } catch (const CapacityError& e) {
    EXPECT_NE(std::string(e.what()).find("domain"), std::string::npos);
  }
}

TEST(Sampling, Variants) {
  auto doms = generate(small_config());
  EXPECT_EQ(strategy_variants(2, 1, 3).kind, SamplingStrategy::Kind::kFixed);
  EXPECT_THROW(strategy_variants(2, 2, 3), ConfigError);
  EXPECT_EQ(SamplingStrategy::parse("S1T2").to_string(), "S1T2");
  EXPECT_EQ(SamplingStrategy::parse("full"), SamplingStrategy::full());

  // S2T1 with three domains behaves like the full split.
  std::mt19937_64 r1(3), r2(3);
  MetaBatch a = build_meta_batch(doms, 6, r1, strategy_variants(2, 1, 3));
  MetaBatch b = build_meta_batch(doms, 6, r2, SamplingStrategy::full());
  for (std::size_t e = 0; e < 3; ++e) {
    EXPECT_EQ(a.episodes[e].train_domains, b.episodes[e].train_domains);
    EXPECT_EQ(a.episodes[e].test_domains, b.episodes[e].test_domains);
    EXPECT_TRUE(a.episodes[e].meta_train.gallery.identical(b.episodes[e].meta_train.gallery));
  }

  // S1T2: one train domain, two pooled test domains.
  std::mt19937_64 r3(4);
  MetaBatch c = build_meta_batch(doms, 6, r3, strategy_variants(1, 2, 3));
  for (const auto& ep : c.episodes) {
    EXPECT_EQ(ep.train_domains.size(), 1u);
    EXPECT_EQ(ep.test_domains.size(), 2u);
    std::set<std::uint32_t> tags(ep.meta_test.domain_tags.begin(), ep.meta_test.domain_tags.end());
    EXPECT_EQ(tags.size(), 2u);
  }
}

TEST(Sampling, PooledSingleTag) {
  auto doms = generate(small_config());
  std::mt19937_64 rng(2);
  MetaBatch mb = build_meta_batch(doms, 9, rng, SamplingStrategy::pooled());
  ASSERT_EQ(mb.episodes.size(), 1u);
  for (auto t : mb.episodes[0].meta_train.domain_tags) EXPECT_EQ(t, 0u);
  EXPECT_EQ(mb.episodes[0].meta_train.size(), 9u);
}

}  // namespace
}  // namespace mfr
