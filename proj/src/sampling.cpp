// Copyright 2026 The MFR Authors.
// SPDX-License-Identifier: Apache-2.0

#include "mfr/sampling.hpp"

#include <algorithm>
#include <numeric>
#include <regex>

#include "mfr/error.hpp"

namespace mfr {
namespace {

// First k entries of a uniformly random permutation of 0..n-1.
std::vector<std::size_t> partial_shuffle(std::size_t n, std::size_t k,
                                         std::mt19937_64& rng) {
  std::vector<std::size_t> idx(n);
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  for (std::size_t i = 0; i < k; ++i) {
    std::uniform_int_distribution<std::size_t> pick(i, n - 1);
    std::swap(idx[i], idx[pick(rng)]);
  }
  idx.resize(k);
  return idx;
}

std::vector<const DomainDataset*> select(std::span<const DomainDataset> domains,
                                         const std::vector<std::size_t>& positions) {
  std::vector<const DomainDataset*> out;
  for (auto p : positions) out.push_back(&domains[p]);
  return out;
}

std::vector<std::uint32_t> ids_of(const std::vector<const DomainDataset*>& ds) {
  std::vector<std::uint32_t> out;
  for (const auto* d : ds) out.push_back(d->domain_id);
  return out;
}

PairSample sample_split(const std::vector<const DomainDataset*>& ds,
                        std::size_t batch_size, std::mt19937_64& rng) {
  auto counts = allocate_evenly(batch_size, ds.size(), rng);
  return sample_pairs(ds, counts, rng);
}

}  // namespace

std::string SamplingStrategy::to_string() const {
  switch (kind) {
    case Kind::kFull:
      return "full";
    case Kind::kRandom:
      return "rand";
    case Kind::kPooled:
      return "pooled";
    case Kind::kFixed:
      return "S" + std::to_string(train_domains) + "T" + std::to_string(test_domains);
  }
  return "full";
}

SamplingStrategy SamplingStrategy::parse(const std::string& text) {
  if (text == "full") return full();
  if (text == "rand") return random();
  if (text == "pooled") return pooled();
  static const std::regex smtn("S([0-9]+)T([0-9]+)");
  std::smatch m;
  if (std::regex_match(text, m, smtn)) {
    SamplingStrategy s;
    s.kind = Kind::kFixed;
    s.train_domains = std::stoul(m[1]);
    s.test_domains = std::stoul(m[2]);
    if (s.train_domains == 0 || s.test_domains == 0) {
      throw ConfigError("strategy " + text + ": m and n must be >= 1");
    }
    return s;
  }
  throw ConfigError("unknown sampling strategy '" + text + "'");
}

SamplingStrategy strategy_variants(std::size_t m, std::size_t n,
                                   std::size_t num_domains) {
  if (m < 1 || n < 1) throw ConfigError("SmTn requires m >= 1 and n >= 1");
  if (m + n > num_domains) {
    throw ConfigError("SmTn arity: m + n = " + std::to_string(m + n) +
                      " exceeds " + std::to_string(num_domains) + " domains");
  }
  return {SamplingStrategy::Kind::kFixed, m, n};
}

std::vector<std::size_t> allocate_evenly(std::size_t total, std::size_t parts,
                                         std::mt19937_64& rng) {
  if (parts == 0) throw ConfigError("cannot allocate across zero domains");
  std::vector<std::size_t> out(parts, total / parts);
  const std::size_t rem = total % parts;
  if (rem > 0) {
    for (auto p : partial_shuffle(parts, rem, rng)) ++out[p];
  }
  return out;
}

PairSample sample_pairs(std::span<const DomainDataset* const> domains,
                        std::span<const std::size_t> counts,
                        std::mt19937_64& rng) {
  if (domains.size() != counts.size()) {
    throw DimensionError("sample_pairs: one count per domain required");
  }
  const std::size_t total = std::accumulate(counts.begin(), counts.end(), std::size_t{0});
  if (total == 0) throw ConfigError("sample_pairs: empty batch");
  const std::size_t dim = domains.front()->observation_dim();

  PairSample out;
  std::vector<double> gallery, probe;
  gallery.reserve(total * dim);
  probe.reserve(total * dim);
  for (std::size_t d = 0; d < domains.size(); ++d) {
    const auto& dom = *domains[d];
    if (dom.identities.size() < counts[d]) {
      throw CapacityError("domain " + std::to_string(dom.domain_id) + " has " +
                          std::to_string(dom.identities.size()) +
                          " identities, batch needs " + std::to_string(counts[d]));
    }
    for (auto idx : partial_shuffle(dom.identities.size(), counts[d], rng)) {
      const auto& ident = dom.identities[idx];
      const std::size_t k = ident.num_observations();
      std::uniform_int_distribution<std::size_t> first(0, k - 1);
      std::uniform_int_distribution<std::size_t> second(0, k - 2);
      std::size_t a = first(rng);
      std::size_t b = second(rng);
      if (b >= a) ++b;
      auto obs = ident.observations.data();
      gallery.insert(gallery.end(), obs.begin() + a * dim, obs.begin() + (a + 1) * dim);
      probe.insert(probe.end(), obs.begin() + b * dim, obs.begin() + (b + 1) * dim);
      out.identity_labels.push_back(ident.id);
      out.domain_tags.push_back(dom.domain_id);
      out.observation_indices.emplace_back(static_cast<std::uint32_t>(a),
                                           static_cast<std::uint32_t>(b));
    }
  }
  out.gallery = Tensor({total, dim}, std::move(gallery));
  out.probe = Tensor({total, dim}, std::move(probe));
  return out;
}

MetaBatch build_meta_batch(std::span<const DomainDataset> domains,
                           std::size_t batch_size, std::mt19937_64& rng,
                           const SamplingStrategy& strategy) {
  using Kind = SamplingStrategy::Kind;
  const std::size_t n_dom = domains.size();
  if (batch_size == 0) throw ConfigError("batch size must be positive");
  MetaBatch mb;

  if (strategy.kind == Kind::kPooled) {
    if (n_dom < 1) throw ConfigError("pooled sampling needs at least one domain");
    std::vector<std::size_t> all(n_dom);
    std::iota(all.begin(), all.end(), std::size_t{0});
    auto ds = select(domains, all);
    Episode ep;
    ep.train_domains = ids_of(ds);
    ep.test_domains = ids_of(ds);
    ep.meta_train = sample_split(ds, batch_size, rng);
    ep.meta_test = sample_split(ds, batch_size, rng);
    // One pooled domain: a single tag for every row.
    std::fill(ep.meta_train.domain_tags.begin(), ep.meta_train.domain_tags.end(), 0u);
    std::fill(ep.meta_test.domain_tags.begin(), ep.meta_test.domain_tags.end(), 0u);
    mb.episodes.push_back(std::move(ep));
    return mb;
  }

  if (n_dom < 2) throw ConfigError("episodic sampling needs at least 2 source domains");
  std::size_t n_test = 1;
  if (strategy.kind == Kind::kFixed) {
    strategy_variants(strategy.train_domains, strategy.test_domains, n_dom);
    n_test = strategy.test_domains;
  }

  for (std::size_t i = 0; i < n_dom; ++i) {
    std::vector<std::size_t> test, rest;
    for (std::size_t k = 0; k < n_test; ++k) test.push_back((i + k) % n_dom);
    for (std::size_t d = 0; d < n_dom; ++d) {
      if (std::find(test.begin(), test.end(), d) == test.end()) rest.push_back(d);
    }

    std::size_t m = rest.size();
    if (strategy.kind == Kind::kFixed) {
      m = strategy.train_domains;
    } else if (strategy.kind == Kind::kRandom) {
      std::uniform_int_distribution<std::size_t> pick_m(1, n_dom - 1);
      m = pick_m(rng);
    }
    std::vector<std::size_t> train;
    if (m == rest.size()) {
      train = rest;
    } else {
      for (auto p : partial_shuffle(rest.size(), m, rng)) train.push_back(rest[p]);
      std::sort(train.begin(), train.end());
    }

    auto train_ds = select(domains, train);
    auto test_ds = select(domains, test);
    Episode ep;
    ep.train_domains = ids_of(train_ds);
    ep.test_domains = ids_of(test_ds);
    ep.meta_train = sample_split(train_ds, batch_size, rng);
    ep.meta_test = sample_split(test_ds, batch_size, rng);
    mb.episodes.push_back(std::move(ep));
  }
  return mb;
}

}  // namespace mfr
