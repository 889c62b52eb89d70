#include "comrl/evalviz/eval.hpp"

#include "comrl/errors.hpp"

#include "json.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <map>

namespace comrl::evalviz {

namespace {

std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

}  // namespace

double mean_of(std::span<const double> v) {
  if (v.empty()) return 0.0;
  double s = 0.0;
  for (double x : v) s += x;
  return s / static_cast<double>(v.size());
}

double std_of(std::span<const double> v) {
  if (v.size() < 2) return 0.0;
  const double m = mean_of(v);
  double s = 0.0;
  for (double x : v) s += (x - m) * (x - m);
  return std::sqrt(s / static_cast<double>(v.size()));
}

std::vector<double> rollout_returns(const envs::TaskSpec& task, const PolicyFn& policy, std::size_t episodes,
                                    nd::Rng& rng, int horizon) {
  if (episodes == 0) throw ConfigError("episodes must be positive");
  std::vector<double> out;
  out.reserve(episodes);
  for (std::size_t e = 0; e < episodes; ++e) {
    envs::EnvState s = envs::reset(task, rng);
    double ret = 0.0;
    for (int t = 0; t < horizon; ++t) {
      const auto obs = envs::observe(s);
      const envs::StepResult r = envs::step(s, policy(obs), task, horizon);
      ret += r.reward;
      s = r.next;
      if (r.terminal) break;
    }
    out.push_back(ret);
  }
  return out;
}

TaskReturn meta_test(const dataset::OfflineTaskDataset& ds_for_context, const encoder::CausalVae& encoder,
                     const sacmeta::SacAgent& policy, const EvalConfig& cfg, std::uint64_t seed) {
  if (ds_for_context.empty()) throw DataError("meta_test: context dataset is empty");
  const envs::TaskSpec& task = ds_for_context.task();
  nd::Rng root = nd::Rng::named(seed, "meta_test").fork(static_cast<std::uint64_t>(task.task_id));
  nd::Rng ctx_rng = root.fork("context");
  nd::Rng info_rng = root.fork("info");
  nd::Rng env_rng = root.fork("env");
  nd::Rng act_rng = root.fork("act");

  const dataset::TaskContext ctx = dataset::sample_context(ds_for_context, ctx_rng, encoder.config().n_ctx);
  const nd::Tensor z = encoder.represent(ctx, info_rng);
  const PolicyFn fn = [&](std::span<const double> obs) {
    const auto a = policy.act(obs, z.values(), cfg.stochastic ? &act_rng : nullptr);
    return std::array<double, 2>{a[0], a[1]};
  };
  TaskReturn tr;
  tr.task_id = task.task_id;
  tr.returns = rollout_returns(task, fn, cfg.episodes, env_rng, cfg.horizon);
  tr.mean_return = mean_of(tr.returns);
  tr.std_return = std_of(tr.returns);
  return tr;
}

EvalReport evaluate_suite(std::span<const EvalTask> tasks, const encoder::CausalVae& encoder,
                          const sacmeta::SacAgent& policy, const EvalConfig& cfg, std::uint64_t seed) {
  EvalReport rep;
  for (const auto& t : tasks) {
    if (t.dataset == nullptr) throw DataError("evaluation task without a context dataset");
    TaskReturn tr = meta_test(*t.dataset, encoder, policy, cfg, seed);
    tr.split = t.split;
    rep.tasks.push_back(std::move(tr));
  }
  std::sort(rep.tasks.begin(), rep.tasks.end(), [](const TaskReturn& a, const TaskReturn& b) {
    return a.split != b.split ? a.split < b.split : a.task_id < b.task_id;
  });
  return rep;
}

std::vector<SplitSummary> EvalReport::summary() const {
  std::map<std::string, std::vector<double>> by_split;
  for (const auto& t : tasks) by_split[t.split].push_back(t.mean_return);
  std::vector<SplitSummary> out;
  for (const auto& [split, means] : by_split) out.push_back({split, means.size(), mean_of(means), std_of(means)});
  return out;
}

void EvalReport::write_csv(std::ostream& os) const {
  os << "split,task_id,mean_return,std_return\n";
  for (const auto& t : tasks) os << t.split << ',' << t.task_id << ',' << fmt(t.mean_return) << ',' << fmt(t.std_return) << '\n';
}

void EvalReport::write_json(std::ostream& os) const {
  nlohmann::ordered_json j = nlohmann::ordered_json::object();
  for (const auto& s : summary()) {
    j[s.split] = {{"n_tasks", s.n_tasks}, {"mean_return", s.mean_return}, {"std_return", s.std_return}};
  }
  os << j.dump(2) << '\n';
}

}  // namespace comrl::evalviz
