// Copyright 2026 The MFR Authors.
// SPDX-License-Identifier: Apache-2.0

#include "mfr/trainer.hpp"

#include <charconv>
#include <cmath>
#include <exception>
#include <thread>

#include "mfr/error.hpp"

namespace mfr {
namespace {

PairBatch embed_pairs(const EmbeddingModel& model, std::span<const Var> theta,
                      const PairSample& s) {
  PairBatch b;
  b.gallery = model.apply(theta, Var(s.gallery));
  b.probe = model.apply(theta, Var(s.probe));
  b.identity_labels = s.identity_labels;
  b.domain_tags = s.domain_tags;
  return b;
}

std::vector<Tensor> zeros_like(std::span<const Tensor> ts) {
  std::vector<Tensor> out;
  out.reserve(ts.size());
  for (const auto& t : ts) out.push_back(Tensor::zeros(t.shape()));
  return out;
}

void append_double(std::string& out, double v) {
  char buf[64];
  auto res = std::to_chars(buf, buf + sizeof(buf), v);
  out.append(buf, res.ptr);
}

void require(bool ok, const char* field, const char* rule) {
  if (!ok) throw ConfigError(std::string(field) + " " + rule);
}

}  // namespace

std::string to_string(MetaMode mode) {
  switch (mode) {
    case MetaMode::kHighOrder:
      return "high_order";
    case MetaMode::kFirstOrder:
      return "first_order";
    case MetaMode::kNoMeta:
      return "no_meta";
  }
  return "high_order";
}

MetaMode parse_meta_mode(const std::string& text) {
  if (text == "high_order") return MetaMode::kHighOrder;
  if (text == "first_order") return MetaMode::kFirstOrder;
  if (text == "no_meta") return MetaMode::kNoMeta;
  throw ConfigError("unknown mode '" + text +
                    "' (expected high_order, first_order or no_meta)");
}

void TrainerConfig::validate() const {
  require(std::isfinite(alpha) && alpha >= 0.0, "alpha", "must be finite and >= 0");
  require(std::isfinite(beta) && beta > 0.0, "beta", "must be finite and > 0");
  require(gamma >= 0.0 && gamma <= 1.0, "gamma", "must lie in [0, 1]");
  require(batch_size > 0, "batch_size", "must be positive");
  require(std::isfinite(s) && s > 0.0, "s", "must be finite and > 0");
  require(tau_p >= -1.0 && tau_p <= 1.0, "tau_p", "must lie in [-1, 1]");
  require(tau_n >= -1.0 && tau_n <= tau_p, "tau_n", "must lie in [-1, tau_p]");
  require(std::isfinite(tau_p_step) && tau_p_step >= 0.0, "tau_p_step", "must be >= 0");
  require(std::isfinite(tau_n_growth) && tau_n_growth >= 1.0, "tau_n_growth", "must be >= 1");
  require(tau_p_cap >= tau_p && tau_p_cap <= 1.0, "tau_p_cap", "must lie in [tau_p, 1]");
  require(decay_every > 0, "decay_every", "must be positive");
  require(decay_rate > 0.0 && decay_rate <= 1.0, "decay_rate", "must lie in (0, 1]");
  require(momentum >= 0.0 && momentum < 1.0, "momentum", "must lie in [0, 1)");
  require(std::isfinite(weight_decay) && weight_decay >= 0.0, "weight_decay", "must be >= 0");
  require(std::isfinite(da_weight) && da_weight >= 0.0, "da_weight", "must be >= 0");
  require(num_threads > 0, "num_threads", "must be positive");
}

OptimizerState OptimizerState::zeros_like(const ParameterSet& theta) {
  OptimizerState st;
  st.velocity = mfr::zeros_like(theta.tensors());
  return st;
}

Schedules apply_schedules(const TrainerConfig& cfg, std::uint64_t step) {
  Schedules s;
  s.n_decay = step / cfg.decay_every;
  const double factor = std::pow(cfg.decay_rate, static_cast<double>(s.n_decay));
  s.alpha = cfg.alpha * factor;
  s.beta = cfg.beta * factor;
  s.tau_p = std::min(cfg.tau_p + cfg.tau_p_step * static_cast<double>(s.n_decay), cfg.tau_p_cap);
  s.tau_n = std::min(cfg.tau_n * std::pow(cfg.tau_n_growth, static_cast<double>(s.n_decay)),
                     s.tau_p);
  return s;
}

LossConfig loss_config(const TrainerConfig& cfg, const Schedules& sched) {
  LossConfig lc;
  lc.s = cfg.s;
  lc.tau_p = sched.tau_p;
  lc.tau_n = sched.tau_n;
  lc.use_hp = cfg.use_hp;
  lc.use_cls = cfg.use_cls;
  lc.use_da = cfg.use_da;
  lc.da_weight = cfg.da_weight;
  lc.detach_template = cfg.detach_template;
  return lc;
}

EpisodeGradients episode_gradients(const EmbeddingModel& model,
                                   const ParameterSet& theta,
                                   const Episode& episode,
                                   const TrainerConfig& cfg,
                                   const Schedules& sched) {
  const LossConfig lc = loss_config(cfg, sched);
  const bool need_test_grad = cfg.gamma < 1.0;
  EpisodeGradients out;
  auto& m = out.metrics;
  m.mode = cfg.mode;
  m.tau_p = sched.tau_p;
  m.tau_n = sched.tau_n;
  m.alpha_eff = cfg.mode == MetaMode::kNoMeta ? 0.0 : sched.alpha;

  Tape tape;
  auto th = EmbeddingModel::track(tape, theta);
  LossBreakdown train = meta_train_loss(embed_pairs(model, th, episode.meta_train), lc);
  m.loss_train = train.total.value().item();
  m.hp = train.hp;
  m.cls = train.cls;
  m.da = train.da;
  m.num_positive = train.num_positive;
  m.num_negative = train.num_negative;

  if (cfg.mode == MetaMode::kHighOrder && need_test_grad) {
    auto g_train = grad_recorded(train.total, th);
    out.train = values_of(g_train);
    auto thp = axpy(th, -m.alpha_eff, g_train);
    LossBreakdown test = meta_test_loss(embed_pairs(model, thp, episode.meta_test), lc);
    m.loss_test = test.total.value().item();
    out.test = grad(test.total, th);
  } else {
    out.train = grad(train.total, th);
    Tape inner_tape;
    auto inner = EmbeddingModel::track(
        inner_tape, cfg.mode == MetaMode::kNoMeta ? theta
                                                  : axpy(theta, -m.alpha_eff, out.train));
    if (!need_test_grad) inner_tape.freeze();
    LossBreakdown test = meta_test_loss(embed_pairs(model, inner, episode.meta_test), lc);
    m.loss_test = test.total.value().item();
    out.test = need_test_grad ? grad(test.total, inner) : zeros_like(theta.tensors());
  }
  m.grad_norm = global_norm(out.train);
  m.meta_grad_norm = global_norm(out.test);
  if (!std::isfinite(m.loss_train) || !std::isfinite(m.loss_test) ||
      !std::isfinite(m.grad_norm) || !std::isfinite(m.meta_grad_norm)) {
    throw NonFiniteError("non-finite loss or gradient");
  }
  return out;
}

AggregatedGradient aggregate_gradients(const EmbeddingModel& model,
                                       const ParameterSet& theta,
                                       const MetaBatch& mb,
                                       const TrainerConfig& cfg,
                                       const Schedules& sched) {
  const std::size_t n = mb.episodes.size();
  if (n == 0) throw ConfigError("meta-batch has no episodes");
  std::vector<std::optional<EpisodeGradients>> results(n);
  std::vector<std::exception_ptr> errors(n);
  auto run = [&](std::size_t first, std::size_t stride) {
    for (std::size_t e = first; e < n; e += stride) {
      try {
        results[e] = episode_gradients(model, theta, mb.episodes[e], cfg, sched);
      } catch (...) {
        errors[e] = std::current_exception();
      }
    }
  };
  const std::size_t workers = std::min(cfg.num_threads, n);
  if (workers <= 1) {
    run(0, 1);
  } else {
    std::vector<std::thread> pool;
    for (std::size_t w = 0; w < workers; ++w) pool.emplace_back(run, w, workers);
    for (auto& t : pool) t.join();
  }

  AggregatedGradient out;
  out.sum = zeros_like(theta.tensors());
  const double gamma = cfg.gamma;
  for (std::size_t e = 0; e < n; ++e) {
    if (errors[e]) {
      try {
        std::rethrow_exception(errors[e]);
      } catch (const NonFiniteError& err) {
        throw DivergenceError(std::string("divergence in episode ") + std::to_string(e) +
                                  ": " + err.what(),
                              -1, static_cast<long>(e));
      }
    }
    auto& r = *results[e];
    r.metrics.episode = e;
    for (std::size_t i = 0; i < out.sum.size(); ++i) {
      out.sum[i] = add(out.sum[i], add(scale(r.train[i], gamma), scale(r.test[i], 1.0 - gamma)));
    }
    out.metrics.push_back(r.metrics);
  }
  return out;
}

ParameterSet sgd_update(const ParameterSet& theta, std::span<const Tensor> sum,
                        std::size_t n, double beta, const TrainerConfig& cfg,
                        OptimizerState& opt) {
  if (opt.velocity.empty()) opt.velocity = zeros_like(theta.tensors());
  if (!theta.aligned_with(sum) || !theta.aligned_with(opt.velocity)) {
    throw DimensionError("sgd_update: gradient or velocity not aligned with parameters");
  }
  const double inv_n = 1.0 / static_cast<double>(n);
  std::vector<Tensor> next;
  next.reserve(theta.size());
  for (std::size_t i = 0; i < theta.size(); ++i) {
    Tensor eff = add(scale(sum[i], inv_n), scale(theta[i], cfg.weight_decay));
    opt.velocity[i] = add(scale(opt.velocity[i], cfg.momentum), eff);
    next.push_back(sub(theta[i], scale(opt.velocity[i], beta)));
  }
  return ParameterSet(theta.names(), std::move(next));
}

StepResult meta_step(const EmbeddingModel& model, const ParameterSet& theta,
                     const MetaBatch& mb, const TrainerConfig& cfg,
                     OptimizerState& opt) {
  const Schedules sched = apply_schedules(cfg, opt.step);
  AggregatedGradient agg;
  try {
    agg = aggregate_gradients(model, theta, mb, cfg, sched);
  } catch (const DivergenceError& err) {
    throw DivergenceError(err.what(), static_cast<long>(opt.step), err.episode());
  }
  OptimizerState next_opt = opt;
  StepResult out;
  try {
    out.params = sgd_update(theta, agg.sum, mb.episodes.size(), sched.beta, cfg, next_opt);
  } catch (const NonFiniteError& err) {
    throw DivergenceError(std::string("divergence in update: ") + err.what(),
                          static_cast<long>(opt.step), -1);
  }
  for (auto& m : agg.metrics) m.step = opt.step;
  out.metrics = std::move(agg.metrics);
  opt = std::move(next_opt);
  opt.step += 1;
  opt.n_decay = apply_schedules(cfg, opt.step).n_decay;
  return out;
}

std::mt19937_64 step_rng(std::uint64_t seed, std::uint64_t step) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(step), static_cast<std::uint32_t>(step >> 32)};
  return std::mt19937_64(seq);
}

TrainResult train(const EmbeddingModel& model,
                  std::span<const DomainDataset> sources,
                  const TrainerConfig& cfg,
                  const std::optional<TrainState>& resume,
                  const TrainHooks& hooks) {
  cfg.validate();
  TrainResult out;
  if (resume) {
    out.params = resume->params;
    out.opt = resume->opt;
    if (out.opt.velocity.empty()) out.opt = OptimizerState::zeros_like(out.params);
    out.opt.velocity.resize(out.params.size());
  } else {
    out.params = model.init_params(cfg.seed);
    out.opt = OptimizerState::zeros_like(out.params);
  }

  while (out.opt.step < cfg.max_iterations) {
    auto rng = step_rng(cfg.seed, out.opt.step);
    MetaBatch mb = build_meta_batch(sources, cfg.batch_size, rng, cfg.strategy);
    StepResult step;
    try {
      step = meta_step(model, out.params, mb, cfg, out.opt);
    } catch (const DivergenceError&) {
      if (hooks.on_divergence) hooks.on_divergence(TrainState{out.params, out.opt});
      throw;
    }
    out.params = std::move(step.params);
    if (hooks.on_step) hooks.on_step(step.metrics);
    out.log.insert(out.log.end(), step.metrics.begin(), step.metrics.end());
    if (cfg.checkpoint_every > 0 && out.opt.step % cfg.checkpoint_every == 0 &&
        hooks.on_checkpoint) {
      hooks.on_checkpoint(TrainState{out.params, out.opt});
    }
  }
  return out;
}

TrainerConfig joint_baseline_config(TrainerConfig cfg) {
  cfg.mode = MetaMode::kNoMeta;
  cfg.gamma = 1.0;
  cfg.use_da = false;
  cfg.strategy = SamplingStrategy::pooled();
  return cfg;
}

TrainResult train_baseline_joint(const EmbeddingModel& model,
                                 std::span<const DomainDataset> sources,
                                 const TrainerConfig& cfg,
                                 const std::optional<TrainState>& resume,
                                 const TrainHooks& hooks) {
  return train(model, sources, joint_baseline_config(cfg), resume, hooks);
}

std::string metrics_csv_header() {
  return "step,episode,L_S,L_T,L_hp,L_cls,L_da,num_positive,num_negative,"
         "grad_norm,meta_grad_norm,alpha_eff,tau_p,tau_n,mode";
}

std::string metrics_csv_row(const EpisodeMetrics& m) {
  std::string row = std::to_string(m.step) + "," + std::to_string(m.episode);
  for (double v : {m.loss_train, m.loss_test, m.hp, m.cls, m.da}) {
    row += ',';
    append_double(row, v);
  }
  row += "," + std::to_string(m.num_positive) + "," + std::to_string(m.num_negative);
  for (double v : {m.grad_norm, m.meta_grad_norm, m.alpha_eff, m.tau_p, m.tau_n}) {
    row += ',';
    append_double(row, v);
  }
  row += "," + to_string(m.mode);
  return row;
}

double global_norm(std::span<const Tensor> tensors) {
  double total = 0.0;
  for (const auto& t : tensors) {
    for (double v : t.data()) total += v * v;
  }
  return std::sqrt(total);
}

}  // namespace mfr
