// Copyright 2026 The MFR Authors.
// SPDX-License-Identifier: Apache-2.0
//
// Verification and identification metrics on an unseen target domain. The
// first observation of each identity forms the gallery and every other
// observation is a probe. Scores are cosine similarities of normalized
// embeddings.

#ifndef MFR_EVAL_HPP_
#define MFR_EVAL_HPP_

#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "mfr/model.hpp"
#include "mfr/synth_data.hpp"

namespace mfr {

// Maps observations [n x D] to a transformed copy [n x D]. When set, the
// representation is normalize([embed(x), embed(transform(x))]).
using FeatureTransform = std::function<Tensor(const Tensor&)>;

// "none" -> empty; "reverse" reverses the feature order of every row.
FeatureTransform make_augmentation(const std::string& name);

struct ProtocolConfig {
  std::vector<double> far_levels{1e-2, 1e-3, 1e-4};
  std::string augmentation = "none";
  std::uint32_t target_domain = 4;

  void validate() const;
};

// [probes x gallery] cosine similarities.
Tensor score_all(const EmbeddingModel& model, const ParameterSet& theta,
                 const Tensor& gallery, const Tensor& probes,
                 const FeatureTransform& augment = {});

// Fraction of genuine scores >= t, where t is the k-th largest impostor
// score and k = floor(far * |impostor|). Raises ProtocolError when k < 1,
// naming the number of impostor scores the level requires.
double vr_at_far(std::span<const double> genuine, std::span<const double> impostor,
                 double far);

// Fraction of probes whose highest-scoring gallery entry (lowest index on
// ties) has the probe's identity. ProtocolError if a probe identity is not
// in the gallery.
double rank1(const Tensor& scores, std::span<const std::uint64_t> probe_labels,
             std::span<const std::uint64_t> gallery_labels);

// Area under the ROC curve with ties handled by trapezoids, i.e.
// P(genuine > impostor) + P(genuine == impostor) / 2.
double roc_auc(std::span<const double> genuine, std::span<const double> impostor);

struct ScoreSplit {
  std::vector<double> genuine;
  std::vector<double> impostor;
};

ScoreSplit split_scores(const Tensor& scores, std::span<const std::uint64_t> probe_labels,
                        std::span<const std::uint64_t> gallery_labels);

struct EvalReport {
  std::vector<std::pair<double, double>> vr_at_far;  // (far, VR)
  double rank1 = 0.0;
  double auc = 0.0;
  std::size_t num_gallery = 0;
  std::size_t num_probes = 0;
  std::size_t num_genuine = 0;
  std::size_t num_impostor = 0;

  // One "key=value" per line.
  std::string to_key_value() const;
  std::string csv_header() const;
  std::string csv_row() const;
  // VR at exactly this FAR level; ProtocolError if it was not evaluated.
  double vr(double far) const;
};

EvalReport evaluate_scores(const Tensor& scores, std::span<const std::uint64_t> probe_labels,
                           std::span<const std::uint64_t> gallery_labels,
                           std::span<const double> far_levels);

EvalReport evaluate(const EmbeddingModel& model, const ParameterSet& theta,
                    const DomainDataset& target, const ProtocolConfig& protocol);

}  // namespace mfr

#endif  // MFR_EVAL_HPP_
