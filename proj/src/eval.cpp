// Copyright 2026 The MFR Authors.
// SPDX-License-Identifier: Apache-2.0

#include "mfr/eval.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <functional>
#include <set>

#include "mfr/error.hpp"

namespace mfr {
namespace {

std::string format_double(double v) {
  char buf[64];
  auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

Tensor represent(const EmbeddingModel& model, const ParameterSet& theta, const Tensor& x,
                 const FeatureTransform& augment) {
  Tensor e = model.embed(theta, x);
  if (augment) e = concat_cols(e, model.embed(theta, augment(x)));
  return l2_normalize_rows(e);
}

}  // namespace

FeatureTransform make_augmentation(const std::string& name) {
  if (name == "none") return {};
  if (name == "reverse") {
    return [](const Tensor& x) {
      std::vector<double> out(x.size());
      const std::size_t cols = x.cols();
      auto in = x.data();
      for (std::size_t r = 0; r < x.rows(); ++r) {
        for (std::size_t c = 0; c < cols; ++c) out[r * cols + c] = in[r * cols + cols - 1 - c];
      }
      return Tensor(x.shape(), std::move(out));
    };
  }
  throw ConfigError("unknown augmentation '" + name + "' (expected none or reverse)");
}

void ProtocolConfig::validate() const {
  if (far_levels.empty()) throw ConfigError("far_levels must not be empty");
  for (double f : far_levels) {
    if (!(f > 0.0 && f <= 1.0)) throw ConfigError("far_levels entries must lie in (0, 1]");
  }
  make_augmentation(augmentation);
}

Tensor score_all(const EmbeddingModel& model, const ParameterSet& theta,
                 const Tensor& gallery, const Tensor& probes,
                 const FeatureTransform& augment) {
  Tensor g = represent(model, theta, gallery, augment);
  Tensor p = represent(model, theta, probes, augment);
  return matmul(p, transpose(g));
}

double vr_at_far(std::span<const double> genuine, std::span<const double> impostor,
                 double far) {
  if (!(far > 0.0 && far <= 1.0)) throw ConfigError("far must lie in (0, 1]");
  if (genuine.empty()) throw ProtocolError("no genuine scores");
  const auto k = static_cast<std::size_t>(
      std::floor(far * static_cast<double>(impostor.size()) + 1e-9));
  if (k < 1) {
    const auto needed = static_cast<std::size_t>(std::ceil(1.0 / far - 1e-9));
    throw ProtocolError("FAR " + format_double(far) + " needs at least " +
                        std::to_string(needed) + " impostor scores, got " +
                        std::to_string(impostor.size()));
  }
  std::vector<double> sorted(impostor.begin(), impostor.end());
  std::nth_element(sorted.begin(), sorted.begin() + static_cast<std::ptrdiff_t>(k - 1),
                   sorted.end(), std::greater<>());
  const double t = sorted[k - 1];
  const auto accepted = std::count_if(genuine.begin(), genuine.end(),
                                      [t](double g) { return g >= t; });
  return static_cast<double>(accepted) / static_cast<double>(genuine.size());
}

double rank1(const Tensor& scores, std::span<const std::uint64_t> probe_labels,
             std::span<const std::uint64_t> gallery_labels) {
  if (scores.rank() != 2 || scores.rows() != probe_labels.size() ||
      scores.cols() != gallery_labels.size()) {
    throw DimensionError("rank1: scores " + shape_to_string(scores.shape()) +
                         " do not match label counts");
  }
  const std::set<std::uint64_t> known(gallery_labels.begin(), gallery_labels.end());
  std::size_t hits = 0;
  for (std::size_t p = 0; p < probe_labels.size(); ++p) {
    if (!known.contains(probe_labels[p])) {
      throw ProtocolError("probe identity " + std::to_string(probe_labels[p]) +
                          " has no gallery entry");
    }
    std::size_t best = 0;
    for (std::size_t g = 1; g < gallery_labels.size(); ++g) {
      if (scores.at(p, g) > scores.at(p, best)) best = g;
    }
    if (gallery_labels[best] == probe_labels[p]) ++hits;
  }
  return static_cast<double>(hits) / static_cast<double>(probe_labels.size());
}

double roc_auc(std::span<const double> genuine, std::span<const double> impostor) {
  if (genuine.empty() || impostor.empty()) {
    throw ProtocolError("AUC needs genuine and impostor scores");
  }
  // (score, is_genuine), swept from the highest score down. Each block of
  // equal scores adds one trapezoid; the doubled area is an exact integer.
  std::vector<std::pair<double, bool>> all;
  all.reserve(genuine.size() + impostor.size());
  for (double g : genuine) all.emplace_back(g, true);
  for (double i : impostor) all.emplace_back(i, false);
  std::sort(all.begin(), all.end(),
            [](const auto& a, const auto& b) { return a.first > b.first; });
  std::uint64_t tp = 0, area2 = 0;
  for (std::size_t i = 0; i < all.size();) {
    std::uint64_t dg = 0, di = 0;
    std::size_t j = i;
    for (; j < all.size() && all[j].first == all[i].first; ++j) {
      if (all[j].second) {
        ++dg;
      } else {
        ++di;
      }
    }
    area2 += di * (2 * tp + dg);
    tp += dg;
    i = j;
  }
  const double denom = 2.0 * static_cast<double>(genuine.size()) *
                       static_cast<double>(impostor.size());
  return static_cast<double>(area2) / denom;
}

ScoreSplit split_scores(const Tensor& scores, std::span<const std::uint64_t> probe_labels,
                        std::span<const std::uint64_t> gallery_labels) {
  if (scores.rank() != 2 || scores.rows() != probe_labels.size() ||
      scores.cols() != gallery_labels.size()) {
    throw DimensionError("split_scores: scores do not match label counts");
  }
  ScoreSplit out;
  for (std::size_t p = 0; p < probe_labels.size(); ++p) {
    for (std::size_t g = 0; g < gallery_labels.size(); ++g) {
      (probe_labels[p] == gallery_labels[g] ? out.genuine : out.impostor)
          .push_back(scores.at(p, g));
    }
  }
  return out;
}

std::string EvalReport::to_key_value() const {
  std::string out;
  for (const auto& [far, vr] : vr_at_far) {
    out += "vr_at_far_" + format_double(far) + "=" + format_double(vr) + "\n";
  }
  out += "rank1=" + format_double(rank1) + "\n";
  out += "auc=" + format_double(auc) + "\n";
  out += "num_gallery=" + std::to_string(num_gallery) + "\n";
  out += "num_probes=" + std::to_string(num_probes) + "\n";
  out += "num_genuine=" + std::to_string(num_genuine) + "\n";
  out += "num_impostor=" + std::to_string(num_impostor) + "\n";
  return out;
}

std::string EvalReport::csv_header() const {
  std::string out;
  for (const auto& entry : vr_at_far) out += "vr_at_far_" + format_double(entry.first) + ",";
  return out + "rank1,auc,num_gallery,num_probes,num_genuine,num_impostor";
}

std::string EvalReport::csv_row() const {
  std::string out;
  for (const auto& entry : vr_at_far) out += format_double(entry.second) + ",";
  return out + format_double(rank1) + "," + format_double(auc) + "," +
         std::to_string(num_gallery) + "," + std::to_string(num_probes) + "," +
         std::to_string(num_genuine) + "," + std::to_string(num_impostor);
}

double EvalReport::vr(double far) const {
  for (const auto& [f, v] : vr_at_far) {
    if (f == far) return v;
  }
  throw ProtocolError("FAR " + format_double(far) + " was not evaluated");
}

EvalReport evaluate_scores(const Tensor& scores, std::span<const std::uint64_t> probe_labels,
                           std::span<const std::uint64_t> gallery_labels,
                           std::span<const double> far_levels) {
  EvalReport report;
  ScoreSplit split = split_scores(scores, probe_labels, gallery_labels);
  for (double far : far_levels) {
    report.vr_at_far.emplace_back(far, vr_at_far(split.genuine, split.impostor, far));
  }
  report.rank1 = rank1(scores, probe_labels, gallery_labels);
  report.auc = roc_auc(split.genuine, split.impostor);
  report.num_gallery = gallery_labels.size();
  report.num_probes = probe_labels.size();
  report.num_genuine = split.genuine.size();
  report.num_impostor = split.impostor.size();
  return report;
}

EvalReport evaluate(const EmbeddingModel& model, const ParameterSet& theta,
                    const DomainDataset& target, const ProtocolConfig& protocol) {
  protocol.validate();
  if (target.identities.size() < 2) {
    throw ProtocolError("target domain needs at least 2 identities");
  }
  const std::size_t dim = target.observation_dim();
  if (dim != model.architecture().input_dim()) {
    throw DimensionError("observation dim " + std::to_string(dim) +
                         " does not match model input " +
                         std::to_string(model.architecture().input_dim()));
  }
  std::vector<double> gallery, probes;
  std::vector<std::uint64_t> gallery_labels, probe_labels;
  for (const auto& ident : target.identities) {
    auto obs = ident.observations.data();
    gallery.insert(gallery.end(), obs.begin(), obs.begin() + static_cast<std::ptrdiff_t>(dim));
    gallery_labels.push_back(ident.id);
    for (std::size_t r = 1; r < ident.num_observations(); ++r) {
      probes.insert(probes.end(), obs.begin() + static_cast<std::ptrdiff_t>(r * dim),
                    obs.begin() + static_cast<std::ptrdiff_t>((r + 1) * dim));
      probe_labels.push_back(ident.id);
    }
  }
  if (probe_labels.empty()) throw ProtocolError("target domain has no probe observations");
  Tensor g({gallery_labels.size(), dim}, std::move(gallery));
  Tensor p({probe_labels.size(), dim}, std::move(probes));
  Tensor scores = score_all(model, theta, g, p, make_augmentation(protocol.augmentation));
  return evaluate_scores(scores, probe_labels, gallery_labels, protocol.far_levels);
}

}  // namespace mfr
