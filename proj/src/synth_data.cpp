// Copyright 2026 The MFR Authors.
// SPDX-License-Identifier: Apache-2.0

#include "mfr/synth_data.hpp"

#include <Eigen/Dense>

#include <cmath>
#include <cstring>
#include <random>
#include <set>

#include "mfr/binary_io.hpp"
#include "mfr/error.hpp"

namespace mfr {
namespace {

constexpr char kDatasetMagic[8] = {'M', 'F', 'R', 'D', 'A', 'T', 'A', '\0'};

using Matrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

Matrix random_orthonormal_columns(std::size_t rows, std::size_t cols,
                                  std::mt19937_64& rng) {
  std::normal_distribution<double> normal(0.0, 1.0);
  Matrix g(rows, cols);
  for (Eigen::Index i = 0; i < g.rows(); ++i) {
    for (Eigen::Index j = 0; j < g.cols(); ++j) g(i, j) = normal(rng);
  }
  Eigen::HouseholderQR<Matrix> qr(g);
  Matrix q = qr.householderQ() * Matrix::Identity(static_cast<Eigen::Index>(rows),
                                                  static_cast<Eigen::Index>(cols));
  return q;
}

}  // namespace

void GeneratorConfig::validate() const {
  if (num_domains == 0) throw ConfigError("num_domains must be positive");
  if (identities_per_domain == 0) throw ConfigError("identities_per_domain must be positive");
  if (observations_per_identity < 2) {
    throw ConfigError("observations_per_identity must be at least 2");
  }
  if (latent_dim == 0) throw ConfigError("latent_dim must be positive");
  if (observation_dim < latent_dim) {
    throw ConfigError("observation_dim must be >= latent_dim");
  }
  if (!(noise_sigma >= 0.0) || !std::isfinite(noise_sigma)) {
    throw ConfigError("noise_sigma must be finite and >= 0");
  }
  if (!(shift >= 0.0 && shift <= 1.0)) throw ConfigError("shift must lie in [0, 1]");
}

std::size_t DomainDataset::observation_dim() const {
  if (identities.empty()) return 0;
  return identities.front().observations.cols();
}

const DomainDataset& Dataset::domain(std::uint32_t id) const {
  for (const auto& d : domains) {
    if (d.domain_id == id) return d;
  }
  throw ProtocolError("unknown domain id " + std::to_string(id));
}

std::vector<DomainDataset> generate(const GeneratorConfig& cfg) {
  cfg.validate();
  const std::size_t d_id = cfg.latent_dim, d_obs = cfg.observation_dim;
  std::mt19937_64 rng(cfg.seed);
  std::normal_distribution<double> normal(0.0, 1.0);

  std::vector<DomainDataset> out;
  out.reserve(cfg.num_domains);
  for (std::uint32_t d = 0; d < cfg.num_domains; ++d) {
    // Q_d is drawn for every domain so the stream does not depend on shift.
    Matrix transform = cfg.shift * random_orthonormal_columns(d_obs, d_id, rng);
    for (std::size_t k = 0; k < d_id; ++k) {
      transform(static_cast<Eigen::Index>(k), static_cast<Eigen::Index>(k)) += 1.0 - cfg.shift;
    }

    DomainDataset domain;
    domain.domain_id = d;
    domain.identities.reserve(cfg.identities_per_domain);
    for (std::uint32_t i = 0; i < cfg.identities_per_domain; ++i) {
      Eigen::VectorXd z(static_cast<Eigen::Index>(d_id));
      for (auto& v : z) v = normal(rng);
      z /= z.norm();
      Eigen::VectorXd clean = transform * z;

      const std::size_t k = cfg.observations_per_identity;
      std::vector<double> obs(k * d_obs);
      for (std::size_t r = 0; r < k; ++r) {
        for (std::size_t c = 0; c < d_obs; ++c) {
          obs[r * d_obs + c] = clean(static_cast<Eigen::Index>(c)) + cfg.noise_sigma * normal(rng);
        }
      }
      Identity ident;
      ident.id = static_cast<std::uint64_t>(d) * cfg.identities_per_domain + i;
      ident.observations = Tensor({k, d_obs}, std::move(obs));
      domain.identities.push_back(std::move(ident));
    }
    out.push_back(std::move(domain));
  }
  return out;
}

void validate_domains(std::span<const DomainDataset> domains) {
  std::set<std::uint64_t> ids;
  std::set<std::uint32_t> domain_ids;
  std::size_t dim = 0;
  for (const auto& d : domains) {
    if (!domain_ids.insert(d.domain_id).second) {
      throw ConfigError("duplicate domain id " + std::to_string(d.domain_id));
    }
    for (const auto& ident : d.identities) {
      if (ident.observations.rank() != 2 || ident.num_observations() < 2) {
        throw ConfigError("identity " + std::to_string(ident.id) +
                          " needs at least 2 observations");
      }
      if (dim == 0) dim = ident.observations.cols();
      if (ident.observations.cols() != dim) {
        throw DimensionError("identity " + std::to_string(ident.id) +
                             " has inconsistent observation dim");
      }
      if (!ids.insert(ident.id).second) {
        throw ConfigError("identity id " + std::to_string(ident.id) +
                          " appears in more than one place");
      }
    }
  }
}

std::vector<std::uint8_t> encode_dataset(const GeneratorConfig& cfg,
                                         std::span<const DomainDataset> domains) {
  validate_domains(domains);
  io::ByteWriter w;
  w.bytes({reinterpret_cast<const std::uint8_t*>(kDatasetMagic), 8});
  w.u32(kDatasetVersion);
  w.u32(cfg.num_domains);
  w.u32(cfg.identities_per_domain);
  w.u32(cfg.observations_per_identity);
  w.u32(cfg.latent_dim);
  w.u32(cfg.observation_dim);
  w.f64(cfg.noise_sigma);
  w.f64(cfg.shift);
  w.u64(cfg.seed);
  w.u32(static_cast<std::uint32_t>(domains.size()));
  for (const auto& d : domains) {
    w.u32(d.domain_id);
    w.u32(static_cast<std::uint32_t>(d.identities.size()));
    for (const auto& ident : d.identities) {
      if (ident.observations.cols() != cfg.observation_dim) {
        throw DimensionError("observation dim does not match the config echo");
      }
      w.u64(ident.id);
      w.u32(static_cast<std::uint32_t>(ident.num_observations()));
      w.f64s(ident.observations.data());
    }
  }
  auto bytes = w.buffer();
  io::ByteWriter tail;
  tail.u32(io::crc32(bytes));
  bytes.insert(bytes.end(), tail.buffer().begin(), tail.buffer().end());
  return bytes;
}

Dataset decode_dataset(std::span<const std::uint8_t> bytes) {
  io::ByteReader r(bytes);
  auto magic = r.bytes(8);
  if (std::memcmp(magic.data(), kDatasetMagic, 8) != 0) {
    throw IoError("not a dataset file (bad magic)");
  }
  const std::uint32_t version = r.u32();
  if (version != kDatasetVersion) {
    throw IoError("unsupported dataset version " + std::to_string(version) +
                  " (expected " + std::to_string(kDatasetVersion) + ")");
  }
  if (bytes.size() < 16) throw IoError("truncated dataset file");
  io::ByteReader tail(bytes.subspan(bytes.size() - 4));
  if (io::crc32(bytes.first(bytes.size() - 4)) != tail.u32()) {
    throw IoError("dataset checksum mismatch");
  }

  Dataset ds;
  auto& c = ds.config;
  c.num_domains = r.u32();
  c.identities_per_domain = r.u32();
  c.observations_per_identity = r.u32();
  c.latent_dim = r.u32();
  c.observation_dim = r.u32();
  c.noise_sigma = r.f64();
  c.shift = r.f64();
  c.seed = r.u64();
  const std::uint32_t nd = r.u32();
  for (std::uint32_t d = 0; d < nd; ++d) {
    DomainDataset domain;
    domain.domain_id = r.u32();
    const std::uint32_t ni = r.u32();
    for (std::uint32_t i = 0; i < ni; ++i) {
      Identity ident;
      ident.id = r.u64();
      const std::uint32_t k = r.u32();
      if (k == 0) throw IoError("identity without observations");
      ident.observations = Tensor({k, c.observation_dim}, r.f64s(std::size_t{k} * c.observation_dim));
      domain.identities.push_back(std::move(ident));
    }
    ds.domains.push_back(std::move(domain));
  }
  if (r.remaining() != 4) throw IoError("trailing bytes in dataset file");
  validate_domains(ds.domains);
  return ds;
}

void save_dataset(const std::filesystem::path& path, const GeneratorConfig& cfg,
                  std::span<const DomainDataset> domains) {
  io::write_file(path, encode_dataset(cfg, domains));
}

Dataset load_dataset(const std::filesystem::path& path) {
  return decode_dataset(io::read_file(path));
}

}  // namespace mfr
