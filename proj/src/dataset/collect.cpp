#include "comrl/dataset/collect.hpp"

#include "comrl/errors.hpp"

namespace comrl::dataset {

sacmeta::SacBatch sample_batch(const OfflineTaskDataset& ds, std::size_t batch, nd::Rng& rng) {
  const std::size_t S = ds.state_dim(), A = ds.action_dim();
  sacmeta::SacBatch b{nd::Tensor(batch, S), nd::Tensor(batch, A), nd::Tensor(batch, 1),
                      nd::Tensor(batch, S), nd::Tensor(batch, 1), nd::Tensor(batch, 0)};
  for (std::size_t i = 0; i < batch; ++i) {
    const auto rec = ds.record(rng.index(ds.size()));
    for (std::size_t k = 0; k < S; ++k) b.s(i, k) = rec[k];
    for (std::size_t k = 0; k < A; ++k) b.a(i, k) = rec[S + k];
    for (std::size_t k = 0; k < S; ++k) b.s_next(i, k) = rec[S + A + k];
    b.r[i] = rec[2 * S + A];
    b.terminal[i] = rec[2 * S + A + 1];
  }
  return b;
}

OfflineTaskDataset collect_offline(const envs::TaskSpec& task, const CollectConfig& cfg, std::uint64_t seed) {
  envs::validate(task);
  if (cfg.steps < static_cast<std::size_t>(cfg.horizon)) {
    throw ConfigError("collect steps must be at least one horizon");
  }
  nd::Rng root = nd::Rng::named(seed, "collect").fork(static_cast<std::uint64_t>(task.task_id));
  nd::Rng init_rng = root.fork("init");
  nd::Rng env_rng = root.fork("env");
  nd::Rng act_rng = root.fork("act");
  nd::Rng update_rng = root.fork("update");

  sacmeta::SacAgent agent(envs::kStateDim, envs::kActionDim, 0, cfg.sac, init_rng);
  OfflineTaskDataset ds(task);
  ds.reserve(cfg.steps);

  envs::EnvState state = envs::reset(task, env_rng);
  for (std::size_t t = 0; t < cfg.steps; ++t) {
    const auto obs = envs::observe(state);
    std::array<double, 2> action{};
    if (t < cfg.random_steps) {
      action = {act_rng.uniform(-1.0, 1.0), act_rng.uniform(-1.0, 1.0)};
    } else {
      const auto a = agent.act(obs, {}, &act_rng);
      action = {a[0], a[1]};
    }
    const envs::StepResult res = envs::step(state, action, task, cfg.horizon);
    const auto obs_next = envs::observe(res.next);
    ds.push_back(obs, action, obs_next, res.reward, res.terminal);
    state = res.terminal ? envs::reset(task, env_rng) : res.next;

    if (ds.size() >= cfg.sac.batch) {
      try {
        agent.update(sample_batch(ds, cfg.sac.batch, update_rng), update_rng);
      } catch (const NumericalError& e) {
        throw NumericalError("behaviour policy for task " + std::to_string(task.task_id) + " diverged at step " +
                             std::to_string(t) + ": " + e.what());
      }
    }
  }
  return ds;
}

}  // namespace comrl::dataset
