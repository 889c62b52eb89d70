#pragma once

#include "comrl/dataset/dataset.hpp"
#include "comrl/encoder/causal_vae.hpp"
#include "comrl/sacmeta/sac.hpp"

#include <array>
#include <cstdint>
#include <functional>
#include <ostream>
#include <span>
#include <string>
#include <vector>

namespace comrl::evalviz {

using PolicyFn = std::function<std::array<double, 2>(std::span<const double> obs)>;

/// Undiscounted returns of `episodes` rollouts of `policy` on `task`.
std::vector<double> rollout_returns(const envs::TaskSpec& task, const PolicyFn& policy, std::size_t episodes,
                                    nd::Rng& rng, int horizon = envs::kDefaultHorizon);

struct TaskReturn {
  std::string split;
  int task_id = 0;
  double mean_return = 0.0;
  double std_return = 0.0;  // population std over episodes
  std::vector<double> returns;
};

struct EvalConfig {
  std::size_t episodes = 5;
  int horizon = envs::kDefaultHorizon;
  /// Sample actions from the policy instead of taking tanh(mean).
  bool stochastic = false;
};

/// One context from ds_for_context, z = encode_mean with goal-absent task
/// info, then rollouts. The task goal is never shown to the models.
TaskReturn meta_test(const dataset::OfflineTaskDataset& ds_for_context, const encoder::CausalVae& encoder,
                     const sacmeta::SacAgent& policy, const EvalConfig& cfg, std::uint64_t seed);

struct EvalTask {
  std::string split;  // "IID" or "OOD"
  const dataset::OfflineTaskDataset* dataset = nullptr;
};

struct SplitSummary {
  std::string split;
  std::size_t n_tasks = 0;
  double mean_return = 0.0;  // mean of per-task means
  double std_return = 0.0;   // population std of per-task means
};

struct EvalReport {
  std::vector<TaskReturn> tasks;  // sorted by (split, task_id)
  std::vector<SplitSummary> summary() const;
  void write_csv(std::ostream& os) const;
  void write_json(std::ostream& os) const;
};

EvalReport evaluate_suite(std::span<const EvalTask> tasks, const encoder::CausalVae& encoder,
                          const sacmeta::SacAgent& policy, const EvalConfig& cfg, std::uint64_t seed);

double mean_of(std::span<const double> v);
/// Population standard deviation (0 for fewer than two values).
double std_of(std::span<const double> v);

}  // namespace comrl::evalviz
