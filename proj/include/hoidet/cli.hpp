#pragma once

// Command-line surface. Five subcommands cover the full loop: `gen` writes a
// synthetic dataset, `train` fits a model on one, `eval` scores a checkpoint,
// `ablate` produces the comparison tables, and `check` runs the built-in
// verification battery. Every command derives all randomness from explicit
// seeds, writes its artifacts under the requested output target, and drops a
// manifest describing exactly what it did.

#include <cstdint>
#include <string>
#include <vector>

#include "json.hpp"

#include "hoidet/model.hpp"
#include "hoidet/trainer.hpp"

namespace hoidet::cli {

// record of one invocation: what ran, the digest of its effective settings,
// and every artifact it wrote
struct RunManifest {
  std::string command;
  std::string config_hash;      // hex digest of the effective config JSON
  std::uint64_t dataset_seed = 0;
  std::string checkpoint_hash;  // hex digest of the checkpoint bytes, "" if none
  std::vector<std::string> outputs;
  double wall_clock_sec = 0.0;

  nlohmann::ordered_json to_json() const;
};

// FNV digest as a fixed-width hex string
std::string hash_hex(const std::string& bytes);
std::string file_hash_hex(const std::string& path);  // IoError when unreadable

// The compact benchmark scale the ablation suites train at: large enough for
// the variant ordering to be meaningful, small enough that a suite of runs
// finishes on a CPU in minutes.
model::ModelConfig ablation_model_config();
train::TrainConfig ablation_train_config();

// exit codes: 0 success, 1 verification failure, 2 bad arguments, 3 I/O error
inline constexpr int kExitOk = 0;
inline constexpr int kExitVerification = 1;
inline constexpr int kExitBadArgs = 2;
inline constexpr int kExitIo = 3;

// args exclude the program name; output goes to stdout/stderr
int run_cli(const std::vector<std::string>& args);

}  // namespace hoidet::cli
