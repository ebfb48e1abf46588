// Copyright 2026 The MFR Authors.
// SPDX-License-Identifier: Apache-2.0
//
// Meta-optimization loop. Each step builds a meta-batch, and for every
// episode computes the meta-train gradient at theta, takes an inner step
// theta' = theta - alpha * grad L_S, evaluates the meta-test loss at theta'
// and accumulates gamma * grad L_S + (1 - gamma) * grad L_T. The sum is
// applied with SGD (momentum, weight decay) at rate beta / n.

#ifndef MFR_TRAINER_HPP_
#define MFR_TRAINER_HPP_

#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "mfr/losses.hpp"
#include "mfr/model.hpp"
#include "mfr/sampling.hpp"

namespace mfr {

enum class MetaMode {
  kHighOrder,   // differentiate L_T through the inner step
  kFirstOrder,  // use grad of L_T w.r.t. theta' in place of theta
  kNoMeta,      // L_T evaluated at theta, alpha unused
};

std::string to_string(MetaMode mode);
MetaMode parse_meta_mode(const std::string& text);

struct TrainerConfig {
  double alpha = 0.0004;
  double beta = 0.0004;
  double gamma = 0.5;
  std::size_t batch_size = 32;
  double s = 64.0;
  double tau_p = 0.3;
  double tau_n = 0.04;
  double tau_p_step = 0.1;    // tau_p grows by this per decay
  double tau_n_growth = 2.0;  // tau_n multiplied by this per decay
  double tau_p_cap = 1.0;
  std::size_t decay_every = 1000;
  double decay_rate = 0.5;
  double momentum = 0.9;
  double weight_decay = 0.0005;
  std::size_t max_iterations = 1000;
  MetaMode mode = MetaMode::kHighOrder;
  bool use_hp = true;
  bool use_cls = true;
  bool use_da = true;
  double da_weight = 1.0;
  bool detach_template = true;
  SamplingStrategy strategy;
  std::uint64_t seed = 2019;
  std::size_t checkpoint_every = 0;  // 0: final checkpoint only
  std::size_t num_threads = 1;       // episodes evaluated concurrently

  // ConfigError naming the offending field.
  void validate() const;
};

struct OptimizerState {
  std::vector<Tensor> velocity;
  std::uint64_t step = 0;
  std::uint64_t n_decay = 0;

  static OptimizerState zeros_like(const ParameterSet& theta);
};

struct Schedules {
  double alpha = 0.0;
  double beta = 0.0;
  double tau_p = 0.0;
  double tau_n = 0.0;
  std::uint64_t n_decay = 0;
};

// Step decay of the step sizes and threshold growth, with tau_p capped at
// tau_p_cap and tau_n capped at the effective tau_p.
Schedules apply_schedules(const TrainerConfig& cfg, std::uint64_t step);

struct EpisodeMetrics {
  std::uint64_t step = 0;
  std::size_t episode = 0;
  double loss_train = 0.0;  // L_S
  double loss_test = 0.0;   // L_T
  double hp = 0.0;
  double cls = 0.0;
  double da = 0.0;
  std::size_t num_positive = 0;
  std::size_t num_negative = 0;
  double grad_norm = 0.0;       // |grad L_S|
  double meta_grad_norm = 0.0;  // |grad L_T| as aggregated
  double alpha_eff = 0.0;
  double tau_p = 0.0;
  double tau_n = 0.0;
  MetaMode mode = MetaMode::kHighOrder;
};

struct EpisodeGradients {
  std::vector<Tensor> train;  // grad of L_S at theta
  std::vector<Tensor> test;   // grad of L_T per the meta mode
  EpisodeMetrics metrics;
};

LossConfig loss_config(const TrainerConfig& cfg, const Schedules& sched);

EpisodeGradients episode_gradients(const EmbeddingModel& model,
                                   const ParameterSet& theta,
                                   const Episode& episode,
                                   const TrainerConfig& cfg,
                                   const Schedules& sched);

struct AggregatedGradient {
  std::vector<Tensor> sum;  // sum over episodes, before division by n
  std::vector<EpisodeMetrics> metrics;
};

// Episodes may run on cfg.num_threads threads; the sum is always taken in
// episode order. Non-finite values raise DivergenceError with the episode
// index.
AggregatedGradient aggregate_gradients(const EmbeddingModel& model,
                                       const ParameterSet& theta,
                                       const MetaBatch& mb,
                                       const TrainerConfig& cfg,
                                       const Schedules& sched);

// velocity <- momentum * velocity + (sum / n + weight_decay * theta)
// theta    <- theta - beta * velocity
ParameterSet sgd_update(const ParameterSet& theta, std::span<const Tensor> sum,
                        std::size_t n, double beta, const TrainerConfig& cfg,
                        OptimizerState& opt);

struct StepResult {
  ParameterSet params;
  std::vector<EpisodeMetrics> metrics;
};

// One outer iteration; advances opt.step.
StepResult meta_step(const EmbeddingModel& model, const ParameterSet& theta,
                     const MetaBatch& mb, const TrainerConfig& cfg,
                     OptimizerState& opt);

struct TrainState {
  ParameterSet params;
  OptimizerState opt;
};

struct TrainHooks {
  // After each step's metrics are final.
  std::function<void(const std::vector<EpisodeMetrics>&)> on_step;
  // Every cfg.checkpoint_every steps.
  std::function<void(const TrainState&)> on_checkpoint;
  // Last good state before a DivergenceError propagates.
  std::function<void(const TrainState&)> on_divergence;
};

struct TrainResult {
  ParameterSet params;
  OptimizerState opt;
  std::vector<EpisodeMetrics> log;
};

// Sampler stream for one step; derived from (seed, step) so a resumed run
// draws the same batches.
std::mt19937_64 step_rng(std::uint64_t seed, std::uint64_t step);

// Runs until opt.step == cfg.max_iterations, starting from `resume` or from
// init_params(cfg.seed).
TrainResult train(const EmbeddingModel& model,
                  std::span<const DomainDataset> sources,
                  const TrainerConfig& cfg,
                  const std::optional<TrainState>& resume = std::nullopt,
                  const TrainHooks& hooks = {});

// Config of the pooled-training baseline: no meta split, gamma = 1, a
// single pooled domain per batch, L_S = hp + cls.
TrainerConfig joint_baseline_config(TrainerConfig cfg);

TrainResult train_baseline_joint(const EmbeddingModel& model,
                                 std::span<const DomainDataset> sources,
                                 const TrainerConfig& cfg,
                                 const std::optional<TrainState>& resume = std::nullopt,
                                 const TrainHooks& hooks = {});

// Metrics CSV: header line, then one row per episode.
std::string metrics_csv_header();
std::string metrics_csv_row(const EpisodeMetrics& m);

double global_norm(std::span<const Tensor> tensors);

}  // namespace mfr

#endif  // MFR_TRAINER_HPP_
