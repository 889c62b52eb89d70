#pragma once

#include "comrl/dataset/dataset.hpp"
#include "comrl/sacmeta/sac.hpp"

#include <cstdint>

namespace comrl::dataset {

struct CollectConfig {
  std::size_t steps = 20000;
  /// Uniform-random actions before the policy takes over.
  std::size_t random_steps = 1000;
  int horizon = envs::kDefaultHorizon;
  sacmeta::SacConfig sac{.width = 128, .depth = 3, .batch = 256};
};

/// Trains a single-task SAC behaviour policy for cfg.steps environment
/// steps and returns its whole replay buffer.
OfflineTaskDataset collect_offline(const envs::TaskSpec& task, const CollectConfig& cfg, std::uint64_t seed);

/// Minibatch of uniformly drawn transitions; z is B x 0.
sacmeta::SacBatch sample_batch(const OfflineTaskDataset& ds, std::size_t batch, nd::Rng& rng);

}  // namespace comrl::dataset
