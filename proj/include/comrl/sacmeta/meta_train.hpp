#pragma once

#include "comrl/dataset/dataset.hpp"
#include "comrl/encoder/causal_vae.hpp"
#include "comrl/sacmeta/sac.hpp"

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <ostream>
#include <span>

namespace comrl::sacmeta {

struct MetaTrainConfig {
  std::size_t rl_steps = 30000;
  SacConfig sac;
  /// Tasks mixed into one minibatch, each with its own context and z.
  std::size_t tasks_per_batch = 1;
  /// Run the evaluation hook before update 0 and then every eval_every
  /// updates (0: only before update 0).
  std::size_t eval_every = 0;

  void validate() const;
};

struct MetaLogRow {
  std::size_t step = 0;
  double critic_loss = 0.0;
  double actor_loss = 0.0;
  std::optional<double> eval_return;
};

struct MetaTrainResult {
  SacAgent agent;
  std::vector<MetaLogRow> log;
};

using EvalHook = std::function<double(const SacAgent&)>;

/// Offline meta-training with a frozen encoder. Each update draws tasks
/// uniformly, a fresh context per task, z = encode_mean with goal-absent task
/// info, and transitions from the same tasks.
MetaTrainResult meta_train(std::span<const dataset::OfflineTaskDataset> datasets, const encoder::CausalVae& encoder,
                           const MetaTrainConfig& cfg, std::uint64_t seed, const EvalHook& eval = {});

/// Task representation used for conditioning, from a raw context.
nd::Tensor task_representation(const encoder::CausalVae& encoder, const dataset::TaskContext& ctx, nd::Rng& rng);

void write_meta_log_csv(std::ostream& os, std::span<const MetaLogRow> rows);

void save_policy(const SacAgent& agent, const std::filesystem::path& path);
SacAgent load_policy(const std::filesystem::path& path);

}  // namespace comrl::sacmeta
