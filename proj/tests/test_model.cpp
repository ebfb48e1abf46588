// Copyright 2026 The MFR Authors.
// SPDX-License-Identifier: Apache-2.0

#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <random>

#include "mfr/binary_io.hpp"
#include "mfr/error.hpp"
#include "mfr/model.hpp"

namespace mfr {
namespace {

Tensor random_matrix(std::size_t r, std::size_t c, std::mt19937_64& rng) {
  std::normal_distribution<double> n(0.0, 1.0);
  std::vector<double> v(r * c);
  for (auto& x : v) x = n(rng);
  return Tensor::matrix(r, c, std::move(v));
}

TEST(Model, InitIsDeterministic) {
  EmbeddingModel m(Architecture{});
  EXPECT_TRUE(m.init_params(5).identical(m.init_params(5)));
  EXPECT_FALSE(m.init_params(5).identical(m.init_params(6)));
}

TEST(Model, GlorotBoundAndZeroBias) {
  EmbeddingModel m(Architecture{{4, 3}, "tanh"});
  ParameterSet p = m.init_params(1);
  ASSERT_EQ(p.size(), 2u);
  EXPECT_EQ(p.name(0), "layer0.weight");
  EXPECT_EQ(p.name(1), "layer0.bias");
  for (double w : p[0].data()) EXPECT_LE(std::abs(w), std::sqrt(6.0 / 7.0));
  for (double b : p[1].data()) EXPECT_EQ(b, 0.0);
}

TEST(Model, ZeroWeightsGiveZeroOutput) {
  EmbeddingModel m(Architecture{{5, 4, 3}, "tanh"});
  ParameterSet p = m.init_params(1);
  std::vector<Tensor> zeros;
  for (const auto& t : p.tensors()) zeros.push_back(Tensor::zeros(t.shape()));
  std::mt19937_64 rng(2);
  Tensor out = m.embed(m.wrap(zeros), random_matrix(3, 5, rng));
  for (double v : out.data()) EXPECT_EQ(v, 0.0);
}

TEST(Model, IdentityLayerCopiesInputSlice) {
  EmbeddingModel m(Architecture{{4, 2}, "tanh"});
  Tensor w = Tensor::matrix(4, 2, {1, 0, 0, 1, 0, 0, 0, 0});
  std::vector<Tensor> t{w, Tensor::zeros({2})};
  Tensor x = Tensor::matrix(1, 4, {0.5, -2.0, 3.0, 7.0});
  Tensor out = m.embed(m.wrap(t), x);
  EXPECT_EQ(out.at(0, 0), 0.5);
  EXPECT_EQ(out.at(0, 1), -2.0);
}

TEST(Model, ApplyMatchesEmbedAndIsRowDecomposable) {
  EmbeddingModel m(Architecture{{6, 8, 4}, "tanh"});
  ParameterSet p = m.init_params(3);
  std::mt19937_64 rng(4);
  Tensor x = random_matrix(5, 6, rng);
  Tape tape;
  auto th = EmbeddingModel::track(tape, p);
  Tensor tracked = m.apply(th, Var(x)).value();
  Tensor plain = m.embed(p, x);
  EXPECT_TRUE(tracked.identical(plain));
  EXPECT_TRUE(m.embed(p, x).identical(plain));
  for (std::size_t i = 0; i < 5; ++i) {
    Tensor row = m.embed(p, x.row(i).reshaped({1, 6}));
    for (std::size_t j = 0; j < 4; ++j) EXPECT_EQ(row.at(0, j), plain.at(i, j));
  }
}

TEST(Model, ShapeMismatchThrows) {
  EmbeddingModel m(Architecture{{6, 4}, "tanh"});
  EXPECT_THROW(m.embed(m.init_params(1), Tensor::zeros({2, 5})), DimensionError);
}

TEST(Model, ArchitectureValidation) {
  EXPECT_THROW(Architecture({{4}, "tanh"}).validate(), ConfigError);
  EXPECT_THROW(Architecture({{4, 0}, "tanh"}).validate(), ConfigError);
  EXPECT_THROW(Architecture({{4, 2}, "gelu?"}).validate(), ConfigError);
}

TEST(Axpy, Examples) {
  ParameterSet one({"x"}, {Tensor::vector({1.0})});
  std::vector<Tensor> g{Tensor::vector({2.0})};
  EXPECT_TRUE(axpy(one, 0.0, g).identical(one));
  EXPECT_EQ(axpy(one, -0.5, g)[0][0], 0.0);

  EmbeddingModel m(Architecture{{5, 4, 3}, "tanh"});
  ParameterSet p = m.init_params(2);
  ParameterSet q = m.init_params(3);
  ParameterSet back = axpy(axpy(p, 0.37, q.tensors()), -0.37, q.tensors());
  for (std::size_t i = 0; i < p.size(); ++i) {
    for (std::size_t j = 0; j < p[i].size(); ++j) EXPECT_NEAR(back[i][j], p[i][j], 1e-12);
  }
  std::vector<Tensor> wrong{Tensor::vector({1.0, 2.0})};
  EXPECT_THROW(axpy(one, 1.0, wrong), DimensionError);
}

class CheckpointTest : public ::testing::Test {
 protected:
  void SetUp() override {
    dir_ = std::filesystem::temp_directory_path() /
           ("mfr_ckpt_" + std::to_string(::testing::UnitTest::GetInstance()->random_seed()) +
            ::testing::UnitTest::GetInstance()->current_test_info()->name());
    std::filesystem::create_directories(dir_);
  }
  void TearDown() override { std::filesystem::remove_all(dir_); }
  std::filesystem::path dir_;
};

TEST_F(CheckpointTest, RoundTrip) {
  EmbeddingModel m(Architecture{{5, 4, 3}, "tanh"});
  Checkpoint c{m.architecture(), 42, 17, m.init_params(9), std::nullopt};
  c.velocity = m.init_params(10).tensors();
  save_checkpoint(dir_ / "c.bin", c);
  Checkpoint d = load_checkpoint(dir_ / "c.bin");
  EXPECT_EQ(d.arch, c.arch);
  EXPECT_EQ(d.config_hash, 42u);
  EXPECT_EQ(d.step, 17u);
  EXPECT_TRUE(d.params.identical(c.params));
  ASSERT_TRUE(d.velocity.has_value());
  for (std::size_t i = 0; i < c.velocity->size(); ++i) EXPECT_TRUE((*d.velocity)[i].identical((*c.velocity)[i]));
  EXPECT_EQ(encode_checkpoint(c), encode_checkpoint(d));
}

TEST_F(CheckpointTest, CorruptionAndVersion) {
  EmbeddingModel m(Architecture{{3, 2}, "tanh"});
  Checkpoint c{m.architecture(), 1, 2, m.init_params(1), std::nullopt};
  auto bytes = encode_checkpoint(c);
  auto flipped = bytes;
  flipped[flipped.size() / 2] ^= 0x40;
  EXPECT_THROW(decode_checkpoint(flipped), IoError);
  auto truncated = bytes;
  truncated.resize(bytes.size() - 9);
  EXPECT_THROW(decode_checkpoint(truncated), IoError);

  // Future version with a valid checksum.
  auto future = bytes;
  future[8] = static_cast<std::uint8_t>(kCheckpointVersion + 1);
  future.resize(future.size() - 4);
  io::ByteWriter w;
  w.bytes(future);
  w.u32(io::crc32(future));
  try {
    decode_checkpoint(w.buffer());
    FAIL();
  } catch (const IoError& e) {
    EXPECT_NE(std::string(e.what()).find("version"), std::string::npos) << e.what();
  }
  EXPECT_THROW(load_checkpoint(dir_ / "missing.bin"), IoError);
}

}  // namespace
}  // namespace mfr
