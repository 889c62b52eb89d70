#pragma once

#include "comrl/cli/config.hpp"
#include "comrl/dataset/dataset.hpp"
#include "comrl/encoder/causal_vae.hpp"
#include "comrl/evalviz/eval.hpp"

#include <cstdint>
#include <filesystem>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

namespace comrl::cli {

struct CommandOptions {
  RunConfig cfg;
  std::optional<std::uint64_t> seed;
  std::filesystem::path out;
  bool force = false;
  std::optional<std::filesystem::path> data_dir;
  std::optional<std::filesystem::path> encoder_path;
  std::optional<std::filesystem::path> policy_path;
  std::ostream* log = nullptr;  // progress messages
};

struct DataSplit {
  std::vector<dataset::OfflineTaskDataset> train;
  std::vector<dataset::OfflineTaskDataset> test;
};

/// Collects one dataset per task of the configured family.
DataSplit collect_split(const RunConfig& cfg, std::uint64_t data_seed);
void write_split(const DataSplit& split, const RunConfig& cfg, std::uint64_t data_seed,
                 const std::filesystem::path& dir);
/// Reads the manifest and every dataset it lists.
DataSplit read_split(const std::filesystem::path& dir);

struct Arm {
  std::string name;
  bool causal = true;
  bool combine = true;
};
/// causal+combine, encoder+combine, causal, encoder.
std::vector<Arm> ablation_arms();
/// Encoder config of an arm: `causal` toggles the causal layer and prior;
/// without combine the contrastive weights are zeroed.
encoder::EncoderConfig arm_encoder_config(const encoder::EncoderConfig& base, const Arm& arm);

struct ArmResult {
  std::string arm;
  std::uint64_t seed = 0;
  evalviz::EvalReport report;
  double silhouette = 0.0;
  double final_dag = 0.0;
};

/// Encoder training, meta-training and evaluation of one arm and seed.
/// Artifacts go to `dir` when given.
ArmResult run_arm(const RunConfig& cfg, const Arm& arm, const DataSplit& data, std::uint64_t seed,
                  const std::optional<std::filesystem::path>& dir, std::ostream* log = nullptr);

int cmd_collect(const CommandOptions& opt);
int cmd_train_encoder(const CommandOptions& opt);
int cmd_train_policy(const CommandOptions& opt);
int cmd_eval(const CommandOptions& opt);
int cmd_embed(const CommandOptions& opt);
int cmd_ablate(const CommandOptions& opt);

/// Dispatches by command name; throws ConfigError for unknown names.
int run_command(const std::string& name, const CommandOptions& opt);

/// Maps an exception to the process exit code (2 config, 3 data,
/// 4 numerical, 1 anything else).
int exit_code_for(const std::exception& e);

}  // namespace comrl::cli
