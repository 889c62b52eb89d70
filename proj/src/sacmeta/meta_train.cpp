#include "comrl/sacmeta/meta_train.hpp"

#include "comrl/dataset/collect.hpp"
#include "comrl/errors.hpp"
#include "comrl/ndmath/binary_io.hpp"

#include "json.hpp"

#include <cmath>
#include <cstdio>

namespace comrl::sacmeta {

using nd::Tensor;

namespace {

constexpr std::uint32_t kPolicyVersion = 1;

std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

}  // namespace

void MetaTrainConfig::validate() const {
  if (rl_steps == 0) throw ConfigError("rl_steps must be positive");
  if (tasks_per_batch == 0) throw ConfigError("tasks_per_batch must be positive");
  if (sac.batch == 0 || sac.batch % tasks_per_batch != 0) {
    throw ConfigError("SAC batch must be a positive multiple of tasks_per_batch");
  }
  if (sac.width == 0 || sac.depth == 0) throw ConfigError("SAC network sizes must be positive");
  for (double v : {sac.lr, sac.gamma, sac.polyak, sac.alpha_ent, sac.bc_weight}) {
    if (!std::isfinite(v) || v < 0.0) throw ConfigError("SAC coefficients must be finite and non-negative");
  }
  if (sac.gamma > 1.0 || sac.polyak > 1.0) throw ConfigError("gamma and polyak must lie in [0, 1]");
}

Tensor task_representation(const encoder::CausalVae& encoder, const dataset::TaskContext& ctx, nd::Rng& rng) {
  return encoder.represent(ctx, rng);
}

MetaTrainResult meta_train(std::span<const dataset::OfflineTaskDataset> datasets, const encoder::CausalVae& encoder,
                           const MetaTrainConfig& cfg, std::uint64_t seed, const EvalHook& eval) {
  cfg.validate();
  if (datasets.empty()) throw DataError("meta-training needs at least one dataset");
  const std::size_t S = datasets[0].state_dim(), A = datasets[0].action_dim(), n = encoder.latent_dim();

  nd::Rng root = nd::Rng::named(seed, "meta_train");
  nd::Rng init_rng = root.fork("init");
  nd::Rng task_rng = root.fork("tasks");
  nd::Rng info_rng = root.fork("info");
  nd::Rng update_rng = root.fork("update");

  std::vector<dataset::ContextSampler> samplers;
  for (const auto& ds : datasets) samplers.emplace_back(ds, encoder.config().n_ctx);

  MetaTrainResult res{SacAgent(S, A, n, cfg.sac, init_rng), {}};
  res.log.reserve(cfg.rl_steps);
  const std::size_t per_task = cfg.sac.batch / cfg.tasks_per_batch;

  for (std::size_t step = 0; step < cfg.rl_steps; ++step) {
    MetaLogRow row;
    row.step = step;
    if (eval && (step == 0 || (cfg.eval_every > 0 && step % cfg.eval_every == 0))) row.eval_return = eval(res.agent);

    SacBatch batch{Tensor(cfg.sac.batch, S), Tensor(cfg.sac.batch, A),  Tensor(cfg.sac.batch, 1),
                   Tensor(cfg.sac.batch, S), Tensor(cfg.sac.batch, 1), Tensor(cfg.sac.batch, n)};
    for (std::size_t k = 0; k < cfg.tasks_per_batch; ++k) {
      const std::size_t t = task_rng.index(datasets.size());
      const Tensor z = task_representation(encoder, samplers[t].sample(task_rng), info_rng);
      const SacBatch part = dataset::sample_batch(datasets[t], per_task, task_rng);
      for (std::size_t i = 0; i < per_task; ++i) {
        const std::size_t r = k * per_task + i;
        for (std::size_t c = 0; c < S; ++c) {
          batch.s(r, c) = part.s(i, c);
          batch.s_next(r, c) = part.s_next(i, c);
        }
        for (std::size_t c = 0; c < A; ++c) batch.a(r, c) = part.a(i, c);
        batch.r[r] = part.r[i];
        batch.terminal[r] = part.terminal[i];
        for (std::size_t c = 0; c < n; ++c) batch.z(r, c) = z[c];
      }
    }
    try {
      const auto stats = res.agent.update(batch, update_rng);
      row.critic_loss = stats.critic_loss;
      row.actor_loss = stats.actor_loss;
    } catch (const NumericalError& e) {
      throw NumericalError("meta-training diverged at update " + std::to_string(step) + " (batch of " +
                           std::to_string(cfg.tasks_per_batch) + " task(s), mean reward " +
                           fmt(batch.r.mat().mean()) + "): " + e.what());
    }
    res.log.push_back(row);
  }
  return res;
}

void write_meta_log_csv(std::ostream& os, std::span<const MetaLogRow> rows) {
  os << "step,critic_loss,actor_loss,eval_return\n";
  for (const auto& r : rows) {
    os << r.step << ',' << fmt(r.critic_loss) << ',' << fmt(r.actor_loss) << ',';
    if (r.eval_return) os << fmt(*r.eval_return);
    os << '\n';
  }
}

void save_policy(const SacAgent& agent, const std::filesystem::path& path) {
  const SacConfig& c = agent.config();
  nlohmann::json j{{"state_dim", agent.state_dim()}, {"action_dim", agent.action_dim()},
                   {"z_dim", agent.z_dim()},         {"width", c.width},
                   {"depth", c.depth},               {"batch", c.batch},
                   {"lr", c.lr},                     {"gamma", c.gamma},
                   {"polyak", c.polyak},             {"alpha_ent", c.alpha_ent},
                   {"bc_weight", c.bc_weight},       {"log_std_min", c.log_std_min},
                   {"log_std_max", c.log_std_max}};
  nd::Checkpoint ckpt;
  ckpt.config_json = j.dump();
  for (nd::Parameter* p : const_cast<SacAgent&>(agent).all_parameters()) ckpt.tensors.push_back(p->value);
  nd::write_checkpoint(path, "CPOL", kPolicyVersion, ckpt);
}

SacAgent load_policy(const std::filesystem::path& path) {
  const nd::Checkpoint ckpt = nd::read_checkpoint(path, "CPOL", kPolicyVersion);
  std::size_t S = 0, A = 0, n = 0;
  SacConfig c;
  try {
    const auto j = nlohmann::json::parse(ckpt.config_json);
    S = j.at("state_dim").get<std::size_t>();
    A = j.at("action_dim").get<std::size_t>();
    n = j.at("z_dim").get<std::size_t>();
    c.width = j.at("width").get<std::size_t>();
    c.depth = j.at("depth").get<std::size_t>();
    c.batch = j.at("batch").get<std::size_t>();
    c.lr = j.at("lr").get<double>();
    c.gamma = j.at("gamma").get<double>();
    c.polyak = j.at("polyak").get<double>();
    c.alpha_ent = j.at("alpha_ent").get<double>();
    c.bc_weight = j.at("bc_weight").get<double>();
    c.log_std_min = j.at("log_std_min").get<double>();
    c.log_std_max = j.at("log_std_max").get<double>();
  } catch (const nlohmann::json::exception& e) {
    throw nd::FormatError(nd::FormatErrc::bad_metadata, e.what());
  }
  nd::Rng scratch(0);
  SacAgent agent(S, A, n, c, scratch);
  auto params = agent.all_parameters();
  if (ckpt.tensors.size() != params.size()) {
    throw nd::FormatError(nd::FormatErrc::dim_mismatch,
                          "policy checkpoint holds " + std::to_string(ckpt.tensors.size()) + " tensors");
  }
  for (std::size_t k = 0; k < params.size(); ++k) {
    if (!ckpt.tensors[k].same_shape(params[k]->value)) {
      throw nd::FormatError(nd::FormatErrc::dim_mismatch, "tensor '" + params[k]->name + "' shape");
    }
    params[k]->value = ckpt.tensors[k];
  }
  return agent;
}

}  // namespace comrl::sacmeta
