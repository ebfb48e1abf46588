// Copyright 2026 The MFR Authors.
// SPDX-License-Identifier: Apache-2.0

#include "mfr/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <random>
#include <sstream>

#include "mfr/error.hpp"

namespace mfr {
namespace {

Tensor gaussian(std::size_t rows, std::size_t cols, double sigma, std::mt19937_64& rng) {
  std::normal_distribution<double> normal(0.0, sigma);
  std::vector<double> v(rows * cols);
  for (auto& x : v) x = normal(rng);
  return Tensor({rows, cols}, std::move(v));
}

PairSample toy_pairs(std::size_t b, std::size_t dim, std::uint64_t first_label,
                     std::size_t num_tags, std::uint32_t first_tag, std::mt19937_64& rng) {
  PairSample s;
  s.gallery = gaussian(b, dim, 1.0, rng);
  s.probe = add(s.gallery, gaussian(b, dim, 0.5, rng));
  for (std::size_t i = 0; i < b; ++i) {
    s.identity_labels.push_back(first_label + i);
    s.domain_tags.push_back(first_tag + static_cast<std::uint32_t>(i % num_tags));
    s.observation_indices.emplace_back(0, 1);
  }
  return s;
}

PairBatch embed(const ToyProblem& p, std::span<const Var> theta, const PairSample& s) {
  PairBatch b;
  b.gallery = p.model.apply(theta, Var(s.gallery));
  b.probe = p.model.apply(theta, Var(s.probe));
  b.identity_labels = s.identity_labels;
  b.domain_tags = s.domain_tags;
  return b;
}

std::vector<Var> leaves(Tape& tape, std::span<const Tensor> ts) {
  std::vector<Var> out;
  for (const auto& t : ts) out.push_back(tape.leaf(t));
  return out;
}

double loss_value(const ToyProblem& p, std::span<const Tensor> theta, const PairSample& s,
                  const LossConfig& lc, bool train_side) {
  std::vector<Var> th(theta.begin(), theta.end());
  auto batch = embed(p, th, s);
  return (train_side ? meta_train_loss(batch, lc) : meta_test_loss(batch, lc)).total.value().item();
}

std::vector<Tensor> train_gradient(const ToyProblem& p, std::span<const Tensor> theta,
                                   const LossConfig& lc) {
  Tape tape;
  auto th = leaves(tape, theta);
  return grad(meta_train_loss(embed(p, th, p.episode.meta_train), lc).total, th);
}

std::vector<Tensor> test_gradient(const ToyProblem& p, std::span<const Tensor> theta,
                                  const LossConfig& lc) {
  Tape tape;
  auto th = leaves(tape, theta);
  return grad(meta_test_loss(embed(p, th, p.episode.meta_test), lc).total, th);
}

std::string fmt(double v) {
  std::ostringstream os;
  os.precision(3);
  os << std::scientific << v;
  return os.str();
}

enum class Component { kHp, kCls, kDa };

Var single_loss(Component c, const PairBatch& b, double s, const Thresholds& t) {
  switch (c) {
    case Component::kHp:
      return hard_pair_loss(b, t);
    case Component::kCls:
      return soft_classification_loss(b, s, false);
    case Component::kDa:
      return domain_alignment_loss(b, s);
  }
  return hard_pair_loss(b, t);
}

const char* component_name(Component c) {
  switch (c) {
    case Component::kHp:
      return "hp";
    case Component::kCls:
      return "cls";
    case Component::kDa:
      return "da";
  }
  return "hp";
}

void first_order_suite(const GradCheckConfig& cfg, GradCheckReport& report) {
  const LossConfig lc = toy_loss_config(cfg);
  const Thresholds t(lc.tau_p, lc.tau_n);
  for (auto c : {Component::kHp, Component::kCls, Component::kDa}) {
    double worst_embed = 0.0, worst_theta = 0.0;
    for (std::size_t k = 0; k < cfg.instances; ++k) {
      ToyProblem p = make_toy_problem(cfg.seed + k);
      const PairSample& s = p.episode.meta_train;
      auto batch_of = [&](const Var& g, const Var& pr) {
        return PairBatch{g, pr, s.identity_labels, s.domain_tags};
      };

      // With respect to raw embeddings.
      const Tensor g0 = p.model.embed(p.theta, s.gallery);
      const Tensor p0 = p.model.embed(p.theta, s.probe);
      const std::vector<Tensor> emb{g0, p0};
      Tape tape;
      auto e = leaves(tape, emb);
      auto ad = flatten(grad(single_loss(c, batch_of(e[0], e[1]), lc.s, t), e));
      auto fd = central_differences(
          [&](std::span<const Tensor> x) {
            return single_loss(c, batch_of(Var(x[0]), Var(x[1])), lc.s, t).value().item();
          },
          emb, cfg.h);
      worst_embed = std::max(worst_embed, max_relative_error(ad, fd, relative_floor(fd)));

      // With respect to theta through the network.
      Tape tape2;
      auto th = leaves(tape2, p.theta.tensors());
      auto eb = embed(p, th, s);
      auto ad2 = flatten(grad(single_loss(c, eb, lc.s, t), th));
      auto fd2 = central_differences(
          [&](std::span<const Tensor> x) {
            std::vector<Var> v(x.begin(), x.end());
            return single_loss(c, embed(p, v, s), lc.s, t).value().item();
          },
          p.theta.tensors(), cfg.h);
      worst_theta = std::max(worst_theta, max_relative_error(ad2, fd2, relative_floor(fd2)));
    }
    const std::string limit = "<= " + fmt(cfg.first_order_tolerance);
    report.results.push_back({"first_order", std::string(component_name(c)) + " wrt embeddings",
                              worst_embed, limit, worst_embed <= cfg.first_order_tolerance});
    report.results.push_back({"first_order", std::string(component_name(c)) + " wrt theta",
                              worst_theta, limit, worst_theta <= cfg.first_order_tolerance});
  }
}

void second_order_suite(const GradCheckConfig& cfg, GradCheckReport& report) {
  const LossConfig lc = toy_loss_config(cfg);
  double worst = 0.0;
  for (std::size_t k = 0; k < cfg.instances; ++k) {
    ToyProblem p = make_toy_problem(cfg.seed + k);
    const MetaMode mode = cfg.inject_bug ? MetaMode::kFirstOrder : MetaMode::kHighOrder;
    auto ad = flatten(episode_meta_gradient(p, lc, cfg.alpha, cfg.gamma, mode));
    auto fd = central_differences(
        [&](std::span<const Tensor> x) {
          return composed_objective(p, x, lc, cfg.alpha, cfg.gamma);
        },
        p.theta.tensors(), cfg.h);
    worst = std::max(worst, max_relative_error(ad, fd, relative_floor(fd)));
  }
  report.results.push_back({"second_order", "meta-gradient at alpha=" + fmt(cfg.alpha), worst,
                            "<= " + fmt(cfg.second_order_tolerance),
                            worst <= cfg.second_order_tolerance});
}

// |F(alpha) - linearization(alpha)| for the composed objective.
double taylor_residual(const ToyProblem& p, const LossConfig& lc, double alpha, double gamma) {
  const auto& theta = p.theta.tensors();
  const auto gs = train_gradient(p, theta, lc);
  const auto gt = test_gradient(p, theta, lc);
  double inner = 0.0;
  for (std::size_t i = 0; i < gs.size(); ++i) inner += dot(gs[i], gt[i]);
  const double ls = loss_value(p, theta, p.episode.meta_train, lc, true);
  const double lt = loss_value(p, theta, p.episode.meta_test, lc, false);
  const double exact = composed_objective(p, theta, lc, alpha, gamma);
  const double linear = gamma * ls + (1.0 - gamma) * lt - alpha * (1.0 - gamma) * inner;
  return std::abs(exact - linear);
}

void taylor_suite(const GradCheckConfig& cfg, GradCheckReport& report) {
  LossConfig lc = toy_loss_config(cfg);
  lc.s = cfg.taylor_s;
  lc.use_hp = false;  // threshold mining is piecewise; keep the objective smooth
  double lo = 1e300, hi = -1e300;
  for (std::size_t k = 0; k < cfg.instances; ++k) {
    ToyProblem p = make_toy_problem(cfg.seed + k);
    for (double a : {cfg.alpha, cfg.alpha / 2.0}) {
      const double ratio = taylor_residual(p, lc, a / 2.0, cfg.gamma) /
                           taylor_residual(p, lc, a, cfg.gamma);
      lo = std::min(lo, ratio);
      hi = std::max(hi, ratio);
    }
  }
  const std::string limit = "in [" + fmt(cfg.taylor_low) + ", " + fmt(cfg.taylor_high) + "]";
  report.results.push_back({"taylor", "min R(a/2)/R(a)", lo, limit,
                            lo >= cfg.taylor_low && lo <= cfg.taylor_high});
  report.results.push_back({"taylor", "max R(a/2)/R(a)", hi, limit,
                            hi >= cfg.taylor_low && hi <= cfg.taylor_high});
}

void gap_suite(const GradCheckConfig& cfg, GradCheckReport& report) {
  const LossConfig lc = toy_loss_config(cfg);
  double worst_ratio = 0.0;
  bool decreasing = true;
  for (std::size_t k = 0; k < cfg.instances; ++k) {
    ToyProblem p = make_toy_problem(cfg.seed + k);
    double prev = 0.0;
    for (int j = 0; j < 3; ++j) {
      const double a = cfg.alpha / std::pow(2.0, j);
      auto hi = flatten(episode_meta_gradient(p, lc, a, cfg.gamma, MetaMode::kHighOrder));
      auto fo = flatten(episode_meta_gradient(p, lc, a, cfg.gamma, MetaMode::kFirstOrder));
      double diff = 0.0, norm = 0.0;
      for (std::size_t i = 0; i < hi.size(); ++i) {
        diff += (hi[i] - fo[i]) * (hi[i] - fo[i]);
        norm += hi[i] * hi[i];
      }
      const double gap = std::sqrt(diff) / std::sqrt(norm);
      if (j > 0) {
        decreasing = decreasing && gap < prev;
        worst_ratio = std::max(worst_ratio, gap / prev);
      }
      prev = gap;
    }
  }
  report.results.push_back({"first_order_gap", "max gap(a/2)/gap(a)", worst_ratio,
                            "<= " + fmt(cfg.gap_ratio) + ", decreasing",
                            decreasing && worst_ratio <= cfg.gap_ratio});
}

}  // namespace

ToyProblem make_toy_problem(std::uint64_t seed, const ToyShape& shape) {
  Architecture arch;
  arch.widths = shape.widths;
  ToyProblem p{EmbeddingModel(arch), {}, {}};
  std::mt19937_64 rng(seed);
  ParameterSet base = p.model.init_params(seed);
  std::vector<Tensor> tensors;
  std::normal_distribution<double> normal(0.0, 0.1);
  for (std::size_t i = 0; i < base.size(); ++i) {
    if (base[i].rank() == 1) {
      std::vector<double> b(base[i].size());
      for (auto& x : b) x = normal(rng);
      tensors.push_back(Tensor(base[i].shape(), std::move(b)));
    } else {
      tensors.push_back(base[i]);
    }
  }
  p.theta = ParameterSet(base.names(), std::move(tensors));
  const std::size_t dim = arch.input_dim();
  p.episode.meta_train = toy_pairs(shape.batch_size, dim, 0, shape.train_domains, 0, rng);
  p.episode.meta_test = toy_pairs(shape.batch_size, dim, shape.batch_size, 1,
                                  static_cast<std::uint32_t>(shape.train_domains), rng);
  for (std::size_t d = 0; d < shape.train_domains; ++d) {
    p.episode.train_domains.push_back(static_cast<std::uint32_t>(d));
  }
  p.episode.test_domains.push_back(static_cast<std::uint32_t>(shape.train_domains));
  return p;
}

std::vector<double> flatten(std::span<const Tensor> tensors) {
  std::vector<double> out;
  for (const auto& t : tensors) out.insert(out.end(), t.data().begin(), t.data().end());
  return out;
}

std::vector<double> central_differences(
    const std::function<double(std::span<const Tensor>)>& f,
    std::span<const Tensor> at, double h) {
  std::vector<Tensor> x(at.begin(), at.end());
  std::vector<double> out;
  for (std::size_t t = 0; t < x.size(); ++t) {
    const Tensor orig = x[t];
    for (std::size_t i = 0; i < orig.size(); ++i) {
      std::vector<double> buf(orig.data().begin(), orig.data().end());
      buf[i] = orig[i] + h;
      x[t] = Tensor(orig.shape(), buf);
      const double up = f(x);
      buf[i] = orig[i] - h;
      x[t] = Tensor(orig.shape(), buf);
      const double down = f(x);
      out.push_back((up - down) / (2.0 * h));
    }
    x[t] = orig;
  }
  return out;
}

double max_relative_error(std::span<const double> got, std::span<const double> want,
                          double floor) {
  if (got.size() != want.size()) throw DimensionError("max_relative_error: size mismatch");
  double worst = 0.0;
  for (std::size_t i = 0; i < got.size(); ++i) {
    const double denom = std::max({std::abs(got[i]), std::abs(want[i]), floor});
    worst = std::max(worst, std::abs(got[i] - want[i]) / denom);
  }
  return worst;
}

double relative_floor(std::span<const double> want) {
  double m = 1.0;
  for (double v : want) m = std::max(m, std::abs(v));
  return 1e-6 * m;
}

double composed_objective(const ToyProblem& p, std::span<const Tensor> theta,
                          const LossConfig& lc, double alpha, double gamma) {
  const double ls = loss_value(p, theta, p.episode.meta_train, lc, true);
  auto g = train_gradient(p, theta, lc);
  std::vector<Tensor> inner;
  for (std::size_t i = 0; i < theta.size(); ++i) inner.push_back(add(theta[i], scale(g[i], -alpha)));
  const double lt = loss_value(p, inner, p.episode.meta_test, lc, false);
  return gamma * ls + (1.0 - gamma) * lt;
}

LossConfig toy_loss_config(const GradCheckConfig& cfg) {
  LossConfig lc;
  lc.s = cfg.s;
  lc.detach_template = false;
  return lc;
}

std::vector<Tensor> episode_meta_gradient(const ToyProblem& p, const LossConfig& lc,
                                          double alpha, double gamma, MetaMode mode) {
  TrainerConfig tc;
  tc.alpha = alpha;
  tc.gamma = gamma;
  tc.s = lc.s;
  tc.tau_p = lc.tau_p;
  tc.tau_n = lc.tau_n;
  tc.use_hp = lc.use_hp;
  tc.use_cls = lc.use_cls;
  tc.use_da = lc.use_da;
  tc.da_weight = lc.da_weight;
  tc.detach_template = lc.detach_template;
  tc.mode = mode;
  Schedules sched;
  sched.alpha = alpha;
  sched.beta = tc.beta;
  sched.tau_p = lc.tau_p;
  sched.tau_n = lc.tau_n;
  MetaBatch mb;
  mb.episodes.push_back(p.episode);
  return aggregate_gradients(p.model, p.theta, mb, tc, sched).sum;
}

bool GradCheckReport::passed() const {
  return std::all_of(results.begin(), results.end(), [](const auto& r) { return r.passed; });
}

std::string GradCheckReport::to_text() const {
  std::ostringstream os;
  for (const auto& r : results) {
    os << (r.passed ? "PASS " : "FAIL ") << r.suite << ": " << r.name << " = " << fmt(r.value)
       << " (" << r.limit << ")\n";
  }
  os << (passed() ? "all checks passed" : "some checks failed") << "\n";
  return os.str();
}

GradCheckReport run_grad_checks(const GradCheckConfig& cfg) {
  if (cfg.instances == 0) throw ConfigError("grad_check.instances must be positive");
  if (!(cfg.h > 0.0)) throw ConfigError("grad_check.h must be positive");
  if (!(cfg.alpha > 0.0)) throw ConfigError("grad_check.alpha must be positive");
  if (!(cfg.gamma >= 0.0 && cfg.gamma < 1.0)) {
    throw ConfigError("grad_check.gamma must lie in [0, 1)");
  }
  GradCheckReport report;
  first_order_suite(cfg, report);
  second_order_suite(cfg, report);
  taylor_suite(cfg, report);
  gap_suite(cfg, report);
  return report;
}

}  // namespace mfr
