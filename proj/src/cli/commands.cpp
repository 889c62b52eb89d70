#include "comrl/cli/commands.hpp"

#include "comrl/dataset/collect.hpp"
#include "comrl/encoder/trainer.hpp"
#include "comrl/errors.hpp"
#include "comrl/evalviz/embedding.hpp"
#include "comrl/losses/losses.hpp"
#include "comrl/ndmath/binary_io.hpp"
#include "comrl/sacmeta/meta_train.hpp"

#include "json.hpp"

#include <algorithm>
#include <atomic>
#include <cstdio>
#include <exception>
#include <fstream>
#include <mutex>
#include <thread>

namespace comrl::cli {

namespace fs = std::filesystem;
using json = nlohmann::ordered_json;

namespace {

std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

void say(std::ostream* log, const std::string& msg) {
  if (log != nullptr) *log << msg << std::endl;
}

// Runs fn(i) for i in [0, n) on up to hardware_concurrency workers. Results
// must not depend on scheduling; the first exception is rethrown.
template <typename Fn>
void parallel_for(std::size_t n, Fn fn) {
  const std::size_t workers = std::max<std::size_t>(1, std::min<std::size_t>(n, std::thread::hardware_concurrency()));
  if (workers <= 1) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::exception_ptr err;
  std::mutex mu;
  std::vector<std::thread> pool;
  for (std::size_t w = 0; w < workers; ++w) {
    pool.emplace_back([&] {
      for (std::size_t i; (i = next++) < n;) {
        try {
          fn(i);
        } catch (...) {
          std::lock_guard lock(mu);
          if (!err) err = std::current_exception();
        }
      }
    });
  }
  for (auto& t : pool) t.join();
  if (err) std::rethrow_exception(err);
}

void require_absent(const fs::path& p, bool force) {
  if (fs::exists(p) && !force) {
    throw ConfigError(p.string() + " already exists; pass --force to overwrite");
  }
}

std::ofstream open_out(const fs::path& p) {
  std::ofstream os(p, std::ios::binary | std::ios::trunc);
  if (!os) throw DataError("cannot write " + p.string());
  return os;
}

fs::path data_dir_of(const CommandOptions& o) { return o.data_dir.value_or(o.out / "data"); }
fs::path encoder_path_of(const CommandOptions& o) { return o.encoder_path.value_or(o.out / "encoder.cenc"); }
fs::path policy_path_of(const CommandOptions& o) { return o.policy_path.value_or(o.out / "policy.cpol"); }
std::uint64_t seed_of(const CommandOptions& o) { return o.seed.value_or(o.cfg.seed); }

std::vector<evalviz::EvalTask> eval_tasks(const DataSplit& data) {
  std::vector<evalviz::EvalTask> tasks;
  for (const auto& ds : data.train) tasks.push_back({"IID", &ds});
  for (const auto& ds : data.test) tasks.push_back({"OOD", &ds});
  return tasks;
}

// Mean deterministic return over the training tasks, used during meta-training.
sacmeta::EvalHook iid_hook(const RunConfig& cfg, const DataSplit& data, const encoder::CausalVae& enc,
                           std::uint64_t seed) {
  return [&cfg, &data, &enc, seed](const sacmeta::SacAgent& agent) {
    std::vector<evalviz::EvalTask> tasks;
    for (const auto& ds : data.train) tasks.push_back({"IID", &ds});
    const auto rep = evalviz::evaluate_suite(tasks, enc, agent, cfg.eval, seed);
    return rep.summary().front().mean_return;
  };
}

}  // namespace

// ---------------------------------------------------------------- data

DataSplit collect_split(const RunConfig& cfg, std::uint64_t data_seed) {
  const envs::TaskSplit tasks = envs::sample_tasks(cfg.family, cfg.n_train, cfg.n_test, data_seed);
  DataSplit out;
  out.train.resize(tasks.train.size());
  out.test.resize(tasks.test.size());
  const std::size_t total = tasks.train.size() + tasks.test.size();
  parallel_for(total, [&](std::size_t i) {
    if (i < tasks.train.size()) {
      out.train[i] = dataset::collect_offline(tasks.train[i], cfg.collect, data_seed);
    } else {
      const std::size_t k = i - tasks.train.size();
      out.test[k] = dataset::collect_offline(tasks.test[k], cfg.collect, data_seed);
    }
  });
  return out;
}

void write_split(const DataSplit& split, const RunConfig& cfg, std::uint64_t data_seed, const fs::path& dir) {
  fs::create_directories(dir);
  json manifest;
  manifest["family"] = std::string(envs::to_string(cfg.family));
  manifest["data_seed"] = data_seed;
  manifest["collect_steps"] = cfg.collect.steps;
  for (const auto* part : {&split.train, &split.test}) {
    json files = json::array();
    for (const auto& ds : *part) {
      const std::string name = dataset::task_filename(ds.task().task_id);
      dataset::write_dataset(ds, dir / name);
      files.push_back(name);
    }
    manifest[part == &split.train ? "train" : "test"] = files;
  }
  open_out(dir / "manifest.json") << manifest.dump(2) << '\n';
}

DataSplit read_split(const fs::path& dir) {
  std::ifstream is(dir / "manifest.json");
  if (!is) throw DataError("missing dataset manifest in " + dir.string());
  json manifest;
  try {
    manifest = json::parse(is);
  } catch (const json::exception& e) {
    throw nd::FormatError(nd::FormatErrc::bad_metadata, std::string("manifest: ") + e.what());
  }
  DataSplit out;
  try {
    for (const auto& name : manifest.at("train")) out.train.push_back(dataset::read_dataset(dir / name.get<std::string>()));
    for (const auto& name : manifest.at("test")) out.test.push_back(dataset::read_dataset(dir / name.get<std::string>()));
  } catch (const json::exception& e) {
    throw nd::FormatError(nd::FormatErrc::bad_metadata, std::string("manifest: ") + e.what());
  }
  if (out.train.empty()) throw DataError("manifest lists no training tasks");
  return out;
}

// ---------------------------------------------------------------- arms

std::vector<Arm> ablation_arms() {
  return {{"causal_encoder+combine", true, true},
          {"encoder+combine", false, true},
          {"causal_encoder", true, false},
          {"encoder", false, false}};
}

encoder::EncoderConfig arm_encoder_config(const encoder::EncoderConfig& base, const Arm& arm) {
  encoder::EncoderConfig c = base;
  c.causal = arm.causal;
  c.combine = arm.combine;
  if (!arm.combine) c.weights.delta = c.weights.kappa = c.weights.nu = 0.0;
  return c;
}

ArmResult run_arm(const RunConfig& cfg, const Arm& arm, const DataSplit& data, std::uint64_t seed,
                  const std::optional<fs::path>& dir, std::ostream* log) {
  if (dir) fs::create_directories(*dir);
  say(log, "[" + arm.name + " seed " + std::to_string(seed) + "] training encoder");
  const auto enc_cfg = arm_encoder_config(cfg.encoder, arm);
  auto trained = encoder::train_encoder(data.train, enc_cfg, seed,
                                        dir ? std::optional<fs::path>(*dir / "encoder_last_batch.csv") : std::nullopt);
  if (dir) {
    trained.model.save(*dir / "encoder.cenc");
    auto os = open_out(*dir / "encoder_loss.csv");
    encoder::write_loss_csv(os, trained.log);
  }
  say(log, "[" + arm.name + " seed " + std::to_string(seed) + "] meta-training policy");
  auto policy = sacmeta::meta_train(data.train, trained.model, cfg.policy, seed);
  if (dir) {
    sacmeta::save_policy(policy.agent, *dir / "policy.cpol");
    auto os = open_out(*dir / "policy_log.csv");
    sacmeta::write_meta_log_csv(os, policy.log);
  }
  ArmResult r;
  r.arm = arm.name;
  r.seed = seed;
  const auto tasks = eval_tasks(data);
  r.report = evalviz::evaluate_suite(tasks, trained.model, policy.agent, cfg.eval, seed);
  r.final_dag = losses::dag_penalty(trained.model.adjacency_value(), enc_cfg.weights.c_dag);
  if (data.test.size() >= 2) {
    r.silhouette = evalviz::silhouette_score(
        evalviz::export_embeddings(data.test, trained.model, std::max<std::size_t>(2, cfg.embed_samples), seed));
  }
  if (dir) {
    auto os = open_out(*dir / "eval.csv");
    r.report.write_csv(os);
  }
  return r;
}

// ---------------------------------------------------------------- commands

int cmd_collect(const CommandOptions& opt) {
  const fs::path dir = data_dir_of(opt);
  if (fs::exists(dir) && !fs::is_empty(dir)) {
    if (!opt.force) throw ConfigError(dir.string() + " is not empty; pass --force to overwrite");
    fs::remove_all(dir);
  }
  const std::uint64_t data_seed = opt.seed.value_or(opt.cfg.data_seed);
  say(opt.log, "collecting " + std::to_string(opt.cfg.n_train + opt.cfg.n_test) + " datasets");
  write_split(collect_split(opt.cfg, data_seed), opt.cfg, data_seed, dir);
  return 0;
}

int cmd_train_encoder(const CommandOptions& opt) {
  const fs::path enc_path = encoder_path_of(opt);
  const fs::path csv_path = enc_path.parent_path() / "encoder_loss.csv";
  require_absent(enc_path, opt.force);
  const DataSplit data = read_split(data_dir_of(opt));
  fs::create_directories(enc_path.parent_path().empty() ? fs::path(".") : enc_path.parent_path());
  auto res = encoder::train_encoder(data.train, opt.cfg.encoder, seed_of(opt),
                                    enc_path.parent_path() / "encoder_last_batch.csv");
  res.model.save(enc_path);
  auto os = open_out(csv_path);
  encoder::write_loss_csv(os, res.log);
  say(opt.log, "final dag_penalty " + fmt(losses::dag_penalty(res.model.adjacency_value(),
                                                               opt.cfg.encoder.weights.c_dag)));
  return 0;
}

int cmd_train_policy(const CommandOptions& opt) {
  const fs::path pol_path = policy_path_of(opt);
  require_absent(pol_path, opt.force);
  const DataSplit data = read_split(data_dir_of(opt));
  const encoder::CausalVae enc = encoder::CausalVae::load(encoder_path_of(opt));
  fs::create_directories(pol_path.parent_path().empty() ? fs::path(".") : pol_path.parent_path());
  const std::uint64_t seed = seed_of(opt);
  const auto hook = opt.cfg.policy.eval_every > 0 ? iid_hook(opt.cfg, data, enc, seed) : sacmeta::EvalHook{};
  const auto res = sacmeta::meta_train(data.train, enc, opt.cfg.policy, seed, hook);
  sacmeta::save_policy(res.agent, pol_path);
  auto os = open_out(pol_path.parent_path() / "policy_log.csv");
  sacmeta::write_meta_log_csv(os, res.log);
  return 0;
}

int cmd_eval(const CommandOptions& opt) {
  require_absent(opt.out / "eval.csv", opt.force);
  const DataSplit data = read_split(data_dir_of(opt));
  const encoder::CausalVae enc = encoder::CausalVae::load(encoder_path_of(opt));
  const sacmeta::SacAgent agent = sacmeta::load_policy(policy_path_of(opt));
  const auto tasks = eval_tasks(data);
  const auto rep = evalviz::evaluate_suite(tasks, enc, agent, opt.cfg.eval, seed_of(opt));
  fs::create_directories(opt.out);
  {
    auto os = open_out(opt.out / "eval.csv");
    rep.write_csv(os);
  }
  auto os = open_out(opt.out / "eval.json");
  rep.write_json(os);
  for (const auto& s : rep.summary()) {
    say(opt.log, s.split + ": " + fmt(s.mean_return) + " +- " + fmt(s.std_return));
  }
  return 0;
}

int cmd_embed(const CommandOptions& opt) {
  require_absent(opt.out / "embeddings.csv", opt.force);
  const DataSplit data = read_split(data_dir_of(opt));
  const encoder::CausalVae enc = encoder::CausalVae::load(encoder_path_of(opt));
  const auto dump = evalviz::export_embeddings(data.test, enc, opt.cfg.embed_samples, seed_of(opt));
  fs::create_directories(opt.out);
  auto os = open_out(opt.out / "embeddings.csv");
  dump.write_csv(os);
  if (data.test.size() >= 2 && opt.cfg.embed_samples >= 2) {
    say(opt.log, "silhouette " + fmt(evalviz::silhouette_score(dump)));
  }
  return 0;
}

int cmd_ablate(const CommandOptions& opt) {
  const fs::path table = opt.out / "ablation.csv";
  require_absent(table, opt.force);
  const DataSplit data = read_split(data_dir_of(opt));
  const auto arms = ablation_arms();
  std::vector<std::uint64_t> seeds = opt.cfg.seeds;
  if (opt.seed) seeds = {*opt.seed};
  std::vector<ArmResult> results(arms.size() * seeds.size());
  parallel_for(results.size(), [&](std::size_t i) {
    const Arm& arm = arms[i / seeds.size()];
    const std::uint64_t seed = seeds[i % seeds.size()];
    results[i] = run_arm(opt.cfg, arm, data, seed,
                         opt.out / "ablation" / (arm.name + "_seed" + std::to_string(seed)), opt.log);
  });
  auto os = open_out(table);
  os << "arm,seed,causal,combine,iid_mean,iid_std,ood_mean,ood_std,silhouette,final_dag\n";
  for (std::size_t i = 0; i < results.size(); ++i) {
    const Arm& arm = arms[i / seeds.size()];
    const ArmResult& r = results[i];
    double iid_m = 0, iid_s = 0, ood_m = 0, ood_s = 0;
    for (const auto& s : r.report.summary()) {
      (s.split == "IID" ? iid_m : ood_m) = s.mean_return;
      (s.split == "IID" ? iid_s : ood_s) = s.std_return;
    }
    os << r.arm << ',' << r.seed << ',' << (arm.causal ? 1 : 0) << ',' << (arm.combine ? 1 : 0) << ',' << fmt(iid_m)
       << ',' << fmt(iid_s) << ',' << fmt(ood_m) << ',' << fmt(ood_s) << ',' << fmt(r.silhouette) << ','
       << fmt(r.final_dag) << '\n';
  }
  return 0;
}

int run_command(const std::string& name, const CommandOptions& opt) {
  if (name == "collect") return cmd_collect(opt);
  if (name == "train-encoder") return cmd_train_encoder(opt);
  if (name == "train-policy") return cmd_train_policy(opt);
  if (name == "eval") return cmd_eval(opt);
  if (name == "embed") return cmd_embed(opt);
  if (name == "ablate") return cmd_ablate(opt);
  throw ConfigError("unknown command '" + name + "'");
}

int exit_code_for(const std::exception& e) {
  if (dynamic_cast<const ConfigError*>(&e) != nullptr) return 2;
  if (dynamic_cast<const DataError*>(&e) != nullptr) return 3;
  if (dynamic_cast<const NumericalError*>(&e) != nullptr) return 4;
  if (dynamic_cast<const fs::filesystem_error*>(&e) != nullptr) return 3;
  return 1;
}

}  // namespace comrl::cli
