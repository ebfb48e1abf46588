// Copyright 2026 The MFR Authors.
// SPDX-License-Identifier: Apache-2.0

#include "mfr/cli.hpp"

#include <CLI11.hpp>
#include <json.hpp>

#include <algorithm>
#include <cstdlib>
#include <fstream>
#include <optional>
#include <ostream>
#include <set>
#include <sstream>

#include "mfr/binary_io.hpp"
#include "mfr/error.hpp"

namespace mfr {
namespace {

using nlohmann::json;
namespace fs = std::filesystem;

// Reads the fields of one JSON object, rejecting unknown keys.
class Section {
 public:
  Section(const json& root, const std::string& name) : name_(name) {
    if (!root.contains(name)) return;
    obj_ = &root.at(name);
    if (!obj_->is_object()) throw ConfigError(name + " must be an object");
  }

  template <typename T>
  void get(const std::string& key, T& dst) {
    if (obj_ == nullptr || !obj_->contains(key)) return;
    seen_.insert(key);
    const json& v = obj_->at(key);
    const std::string field = name_ + "." + key;
    if constexpr (std::is_same_v<T, bool>) {
      if (!v.is_boolean()) throw ConfigError(field + " must be a boolean");
    } else if constexpr (std::is_integral_v<T>) {
      if (!v.is_number_unsigned()) throw ConfigError(field + " must be a non-negative integer");
    } else if constexpr (std::is_floating_point_v<T>) {
      if (!v.is_number()) throw ConfigError(field + " must be a number");
    } else if constexpr (std::is_same_v<T, std::string>) {
      if (!v.is_string()) throw ConfigError(field + " must be a string");
    }
    try {
      dst = v.get<T>();
    } catch (const json::exception&) {
      throw ConfigError(field + " has the wrong type");
    }
  }

  void finish() const {
    if (obj_ == nullptr) return;
    for (const auto& item : obj_->items()) {
      if (!seen_.contains(item.key())) {
        throw ConfigError("unknown field " + name_ + "." + item.key());
      }
    }
  }

 private:
  std::string name_;
  const json* obj_ = nullptr;
  std::set<std::string> seen_;
};

void write_text(const fs::path& path, const std::string& text) {
  io::write_file(path, std::vector<std::uint8_t>(text.begin(), text.end()));
}

void apply_mode(RunConfig& cfg, const std::string& mode) {
  if (mode == "joint") {
    cfg.joint_baseline = true;
  } else {
    cfg.trainer.mode = parse_meta_mode(mode);
    cfg.joint_baseline = false;
  }
}

std::vector<DomainDataset> source_domains(const Dataset& ds, std::uint32_t target) {
  std::vector<DomainDataset> sources;
  bool found = false;
  for (const auto& d : ds.domains) {
    if (d.domain_id == target) {
      found = true;
    } else {
      sources.push_back(d);
    }
  }
  if (!found) {
    throw ProtocolError("target domain " + std::to_string(target) + " is not in the dataset");
  }
  return sources;
}

void check_model_fits(const RunConfig& cfg, const Dataset& ds) {
  if (ds.config.observation_dim != cfg.model.input_dim()) {
    throw ConfigError("model.widths[0] = " + std::to_string(cfg.model.input_dim()) +
                      " must equal the dataset observation_dim " +
                      std::to_string(ds.config.observation_dim));
  }
}

RunConfig config_or_default(const std::string& path) {
  RunConfig cfg = path.empty() ? RunConfig{} : load_run_config(path);
  cfg.validate();
  return cfg;
}

int cmd_gen_data(const std::string& config, const std::string& out_path, std::ostream& out) {
  RunConfig cfg = config_or_default(config);
  auto domains = generate(cfg.generator);
  save_dataset(out_path, cfg.generator, domains);
  std::size_t identities = 0;
  for (const auto& d : domains) identities += d.identities.size();
  out << "wrote " << out_path << ": " << domains.size() << " domains, " << identities
      << " identities, " << cfg.generator.observations_per_identity
      << " observations each, dim " << cfg.generator.observation_dim << "\n";
  return kExitOk;
}

int cmd_train(const std::string& config, const std::string& data, const std::string& out_dir,
              const std::string& resume_path, const std::string& mode, std::ostream& out,
              std::ostream& err) {
  RunConfig cfg = config.empty() ? RunConfig{} : load_run_config(config);
  if (!mode.empty()) apply_mode(cfg, mode);
  cfg.validate();
  const Dataset ds = load_dataset(data);
  check_model_fits(cfg, ds);
  const auto sources = source_domains(ds, cfg.protocol.target_domain);
  const EmbeddingModel model(cfg.model);
  TrainerConfig tc = cfg.trainer;
  tc.num_threads = threads_from_env();
  const std::uint64_t hash = config_hash(cfg);

  std::error_code ec;
  fs::create_directories(out_dir, ec);
  if (ec) throw IoError("cannot create " + out_dir + ": " + ec.message());
  const fs::path dir(out_dir);
  write_text(dir / "config.json", to_json(cfg));

  std::optional<TrainState> resume;
  if (!resume_path.empty()) {
    Checkpoint ck = load_checkpoint(resume_path);
    if (!(ck.arch == cfg.model)) {
      throw ConfigError("checkpoint architecture does not match model config");
    }
    if (ck.config_hash != hash) {
      err << "warning: checkpoint was written under a different config\n";
    }
    TrainState st;
    st.params = ck.params;
    st.opt.step = ck.step;
    st.opt.n_decay = apply_schedules(tc, ck.step).n_decay;
    st.opt.velocity = ck.velocity ? *ck.velocity : OptimizerState::zeros_like(ck.params).velocity;
    resume = std::move(st);
  }

  const fs::path metrics_path = dir / "metrics.csv";
  const bool append = resume.has_value() && fs::exists(metrics_path);
  std::ofstream metrics(metrics_path, append ? std::ios::app : std::ios::trunc);
  if (!metrics) throw IoError("cannot open " + metrics_path.string());
  if (!append) metrics << metrics_csv_header() << "\n";

  auto checkpoint = [&](const TrainState& st) {
    return Checkpoint{cfg.model, hash, st.opt.step, st.params, st.opt.velocity};
  };
  TrainHooks hooks;
  hooks.on_step = [&](const std::vector<EpisodeMetrics>& rows) {
    for (const auto& m : rows) metrics << metrics_csv_row(m) << "\n";
    metrics.flush();
    if (!metrics) throw IoError("failed writing " + metrics_path.string());
  };
  hooks.on_checkpoint = [&](const TrainState& st) {
    save_checkpoint(dir / ("checkpoint_step_" + std::to_string(st.opt.step) + ".bin"),
                    checkpoint(st));
  };
  hooks.on_divergence = [&](const TrainState& st) {
    save_checkpoint(dir / "checkpoint_last_good.bin", checkpoint(st));
  };

  TrainResult result;
  try {
    result = cfg.joint_baseline ? train_baseline_joint(model, sources, tc, resume, hooks)
                                : train(model, sources, tc, resume, hooks);
  } catch (const DivergenceError& e) {
    err << "divergence at step " << e.step() << ", episode " << e.episode() << ": " << e.what()
        << "\nlast good checkpoint: " << (dir / "checkpoint_last_good.bin").string() << "\n";
    return kExitDivergence;
  }
  save_checkpoint(dir / "checkpoint_final.bin",
                  checkpoint(TrainState{result.params, result.opt}));
  out << "trained " << cfg.mode_name() << " to step " << result.opt.step << " on "
      << sources.size() << " source domains; outputs in " << out_dir << "\n";
  return kExitOk;
}

int cmd_eval(const std::string& config, const std::string& ckpt_path, const std::string& data,
             const std::optional<std::uint32_t>& target, const std::string& out_dir,
             std::ostream& out) {
  RunConfig cfg = config_or_default(config);
  if (target) cfg.protocol.target_domain = *target;
  const Checkpoint ck = load_checkpoint(ckpt_path);
  const Dataset ds = load_dataset(data);
  const DomainDataset& domain = ds.domain(cfg.protocol.target_domain);
  const EmbeddingModel model(ck.arch);
  if (ds.config.observation_dim != ck.arch.input_dim()) {
    throw ConfigError("checkpoint input dim does not match the dataset observation_dim");
  }
  const EvalReport report = evaluate(model, ck.params, domain, cfg.protocol);
  const std::string kv = "target_domain=" + std::to_string(cfg.protocol.target_domain) + "\n" +
                         "step=" + std::to_string(ck.step) + "\n" + report.to_key_value();
  if (!out_dir.empty()) {
    std::error_code ec;
    fs::create_directories(out_dir, ec);
    if (ec) throw IoError("cannot create " + out_dir + ": " + ec.message());
    write_text(fs::path(out_dir) / "report.txt", kv);
    write_text(fs::path(out_dir) / "report.csv",
               "target_domain,step," + report.csv_header() + "\n" +
                   std::to_string(cfg.protocol.target_domain) + "," + std::to_string(ck.step) +
                   "," + report.csv_row() + "\n");
  }
  out << kv;
  return kExitOk;
}

int cmd_grad_check(const std::string& config, bool inject_bug, std::ostream& out) {
  RunConfig cfg = config_or_default(config);
  GradCheckConfig gc = cfg.grad_check;
  gc.inject_bug = inject_bug;
  const GradCheckReport report = run_grad_checks(gc);
  out << report.to_text();
  return report.passed() ? kExitOk : kExitCheckFailed;
}

}  // namespace

void RunConfig::validate() const {
  generator.validate();
  model.validate();
  trainer.validate();
  protocol.validate();
  if (model.input_dim() != generator.observation_dim) {
    throw ConfigError("model.widths[0] must equal generator.observation_dim");
  }
}

std::string RunConfig::mode_name() const {
  return joint_baseline ? "joint" : to_string(trainer.mode);
}

RunConfig parse_run_config(const std::string& json_text) {
  json root;
  try {
    root = json::parse(json_text);
  } catch (const json::parse_error& e) {
    throw ConfigError(std::string("config is not valid JSON: ") + e.what());
  }
  if (!root.is_object()) throw ConfigError("config must be a JSON object");
  static const std::set<std::string> kSections{"generator", "model", "trainer",
                                               "protocol", "output", "grad_check"};
  for (const auto& item : root.items()) {
    if (!kSections.contains(item.key())) throw ConfigError("unknown section " + item.key());
  }

  RunConfig cfg;
  {
    auto& g = cfg.generator;
    Section s(root, "generator");
    s.get("num_domains", g.num_domains);
    s.get("identities_per_domain", g.identities_per_domain);
    s.get("observations_per_identity", g.observations_per_identity);
    s.get("latent_dim", g.latent_dim);
    s.get("observation_dim", g.observation_dim);
    s.get("noise_sigma", g.noise_sigma);
    s.get("shift", g.shift);
    s.get("seed", g.seed);
    s.finish();
  }
  {
    Section s(root, "model");
    s.get("widths", cfg.model.widths);
    s.get("nonlinearity", cfg.model.nonlinearity);
    s.finish();
  }
  {
    auto& t = cfg.trainer;
    Section s(root, "trainer");
    s.get("alpha", t.alpha);
    s.get("beta", t.beta);
    s.get("gamma", t.gamma);
    s.get("batch_size", t.batch_size);
    s.get("s", t.s);
    s.get("tau_p", t.tau_p);
    s.get("tau_n", t.tau_n);
    s.get("tau_p_step", t.tau_p_step);
    s.get("tau_n_growth", t.tau_n_growth);
    s.get("tau_p_cap", t.tau_p_cap);
    s.get("decay_every", t.decay_every);
    s.get("decay_rate", t.decay_rate);
    s.get("momentum", t.momentum);
    s.get("weight_decay", t.weight_decay);
    s.get("max_iterations", t.max_iterations);
    std::string mode = "high_order";
    s.get("mode", mode);
    apply_mode(cfg, mode);
    s.get("use_hp", t.use_hp);
    s.get("use_cls", t.use_cls);
    s.get("use_da", t.use_da);
    s.get("da_weight", t.da_weight);
    s.get("detach_template", t.detach_template);
    std::string strategy = t.strategy.to_string();
    s.get("strategy", strategy);
    t.strategy = SamplingStrategy::parse(strategy);
    s.get("seed", t.seed);
    s.finish();
  }
  {
    auto& p = cfg.protocol;
    Section s(root, "protocol");
    s.get("far_levels", p.far_levels);
    s.get("augmentation", p.augmentation);
    s.get("target_domain", p.target_domain);
    s.finish();
  }
  {
    Section s(root, "output");
    s.get("checkpoint_every", cfg.trainer.checkpoint_every);
    s.finish();
  }
  {
    auto& g = cfg.grad_check;
    Section s(root, "grad_check");
    s.get("seed", g.seed);
    s.get("instances", g.instances);
    s.get("h", g.h);
    s.get("alpha", g.alpha);
    s.get("gamma", g.gamma);
    s.get("s", g.s);
    s.get("taylor_s", g.taylor_s);
    s.finish();
  }
  return cfg;
}

RunConfig load_run_config(const std::filesystem::path& path) {
  auto bytes = io::read_file(path);
  return parse_run_config(std::string(bytes.begin(), bytes.end()));
}

std::string to_json(const RunConfig& cfg) {
  const auto& g = cfg.generator;
  const auto& t = cfg.trainer;
  const auto& p = cfg.protocol;
  const auto& c = cfg.grad_check;
  json root;
  root["generator"] = {{"num_domains", g.num_domains},
                       {"identities_per_domain", g.identities_per_domain},
                       {"observations_per_identity", g.observations_per_identity},
                       {"latent_dim", g.latent_dim},
                       {"observation_dim", g.observation_dim},
                       {"noise_sigma", g.noise_sigma},
                       {"shift", g.shift},
                       {"seed", g.seed}};
  root["model"] = {{"widths", cfg.model.widths}, {"nonlinearity", cfg.model.nonlinearity}};
  root["trainer"] = {{"alpha", t.alpha},
                     {"beta", t.beta},
                     {"gamma", t.gamma},
                     {"batch_size", t.batch_size},
                     {"s", t.s},
                     {"tau_p", t.tau_p},
                     {"tau_n", t.tau_n},
                     {"tau_p_step", t.tau_p_step},
                     {"tau_n_growth", t.tau_n_growth},
                     {"tau_p_cap", t.tau_p_cap},
                     {"decay_every", t.decay_every},
                     {"decay_rate", t.decay_rate},
                     {"momentum", t.momentum},
                     {"weight_decay", t.weight_decay},
                     {"max_iterations", t.max_iterations},
                     {"mode", cfg.mode_name()},
                     {"use_hp", t.use_hp},
                     {"use_cls", t.use_cls},
                     {"use_da", t.use_da},
                     {"da_weight", t.da_weight},
                     {"detach_template", t.detach_template},
                     {"strategy", t.strategy.to_string()},
                     {"seed", t.seed}};
  root["protocol"] = {{"far_levels", p.far_levels},
                      {"augmentation", p.augmentation},
                      {"target_domain", p.target_domain}};
  root["output"] = {{"checkpoint_every", t.checkpoint_every}};
  root["grad_check"] = {{"seed", c.seed}, {"instances", c.instances}, {"h", c.h},
                        {"alpha", c.alpha}, {"gamma", c.gamma}, {"s", c.s},
                        {"taylor_s", c.taylor_s}};
  return root.dump(2) + "\n";
}

std::uint64_t config_hash(const RunConfig& cfg) {
  const std::string text = to_json(cfg);
  return io::crc32({reinterpret_cast<const std::uint8_t*>(text.data()), text.size()});
}

std::size_t threads_from_env() {
  const char* v = std::getenv("MFR_THREADS");
  if (v == nullptr || *v == '\0') return 1;
  std::size_t n = 0;
  try {
    std::size_t pos = 0;
    const long long parsed = std::stoll(v, &pos);
    if (pos != std::string(v).size() || parsed < 1) throw std::invalid_argument("range");
    n = static_cast<std::size_t>(parsed);
  } catch (const std::exception&) {
    throw ConfigError(std::string("MFR_THREADS must be a positive integer, got '") + v + "'");
  }
  return n;
}

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Meta face recognition training engine"};
  app.require_subcommand(1);

  std::string config, data, out_path, resume, mode, checkpoint;
  std::optional<std::uint32_t> target;
  bool inject_bug = false;

  auto* gen = app.add_subcommand("gen-data", "Generate a synthetic multi-domain dataset");
  gen->add_option("--config", config, "Run config (JSON)");
  gen->add_option("--out", out_path, "Dataset file to write")->required();

  auto* tr = app.add_subcommand("train", "Train on all domains except the target");
  tr->add_option("--config", config, "Run config (JSON)");
  tr->add_option("--data", data, "Dataset file")->required();
  tr->add_option("--out", out_path, "Output directory")->required();
  tr->add_option("--resume", resume, "Checkpoint to resume from");
  tr->add_option("--mode", mode, "high_order, first_order, no_meta or joint");

  auto* ev = app.add_subcommand("eval", "Evaluate a checkpoint on the target domain");
  ev->add_option("--config", config, "Run config (JSON)");
  ev->add_option("--checkpoint", checkpoint, "Checkpoint file")->required();
  ev->add_option("--data", data, "Dataset file")->required();
  ev->add_option("--target", target, "Target domain id (default: protocol.target_domain)");
  ev->add_option("--out", out_path, "Directory for report.txt and report.csv");

  auto* gc = app.add_subcommand("grad-check", "Finite-difference gradient checks");
  gc->add_option("--config", config, "Run config (JSON)");
  gc->add_flag("--inject-bug", inject_bug, "Negative control: must make the checks fail");

  std::vector<std::string> reversed(args.rbegin(), args.rend());
  try {
    app.parse(reversed);
  } catch (const CLI::ParseError& e) {
    std::ostringstream o, r;
    const int code = app.exit(e, o, r);
    out << o.str();
    err << r.str();
    return code == 0 ? kExitOk : kExitUsage;
  }

  try {
    if (gen->parsed()) return cmd_gen_data(config, out_path, out);
    if (tr->parsed()) return cmd_train(config, data, out_path, resume, mode, out, err);
    if (ev->parsed()) return cmd_eval(config, checkpoint, data, target, out_path, out);
    if (gc->parsed()) return cmd_grad_check(config, inject_bug, out);
  } catch (const ConfigError& e) {
    err << "config error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const CapacityError& e) {
    err << "config error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const IoError& e) {
    err << "i/o error: " << e.what() << "\n";
    return kExitIo;
  } catch (const DivergenceError& e) {
    err << "divergence: " << e.what() << "\n";
    return kExitDivergence;
  } catch (const ProtocolError& e) {
    err << "protocol error: " << e.what() << "\n";
    return kExitProtocol;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kExitUsage;
  }
  return kExitUsage;
}

}  // namespace mfr
