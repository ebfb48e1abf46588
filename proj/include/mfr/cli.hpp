// Copyright 2026 The MFR Authors.
// SPDX-License-Identifier: Apache-2.0
//
// Command-line surface: gen-data, train, eval, grad-check. A run is fully
// described by one JSON config file; see README.md for every field.

#ifndef MFR_CLI_HPP_
#define MFR_CLI_HPP_

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <string>
#include <vector>

#include "mfr/eval.hpp"
#include "mfr/gradcheck.hpp"
#include "mfr/model.hpp"
#include "mfr/synth_data.hpp"
#include "mfr/trainer.hpp"

namespace mfr {

enum ExitCode : int {
  kExitOk = 0,
  kExitUsage = 1,
  kExitConfig = 2,
  kExitIo = 3,
  kExitDivergence = 4,
  kExitProtocol = 5,
  kExitCheckFailed = 6,
};

struct RunConfig {
  GeneratorConfig generator;
  Architecture model;
  TrainerConfig trainer;
  bool joint_baseline = false;  // trainer.mode "joint"
  ProtocolConfig protocol;
  GradCheckConfig grad_check;

  // Cross-section checks on top of each section's own validation.
  void validate() const;
  // "high_order", "first_order", "no_meta" or "joint".
  std::string mode_name() const;
};

// Missing fields keep their defaults; unknown fields and type mismatches
// raise ConfigError naming the field.
RunConfig parse_run_config(const std::string& json_text);
RunConfig load_run_config(const std::filesystem::path& path);
// Fully resolved config, keys sorted, 2-space indent.
std::string to_json(const RunConfig& cfg);
std::uint64_t config_hash(const RunConfig& cfg);

// Number of threads from MFR_THREADS (default 1).
std::size_t threads_from_env();

// Runs one command, e.g. {"train", "--config", "c.json", ...}, and returns
// the process exit code. Errors are reported on `err`.
int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace mfr

#endif  // MFR_CLI_HPP_
