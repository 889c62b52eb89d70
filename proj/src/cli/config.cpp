#include "comrl/cli/config.hpp"

#include "comrl/errors.hpp"

#include "json.hpp"

#include <cmath>
#include <fstream>
#include <sstream>

namespace comrl::cli {

using json = nlohmann::ordered_json;

namespace {

json sac_to_json(const sacmeta::SacConfig& s) {
  return {{"width", s.width},   {"depth", s.depth},         {"batch", s.batch},
          {"lr", s.lr},         {"gamma", s.gamma},         {"polyak", s.polyak},
          {"alpha_ent", s.alpha_ent}, {"bc_weight", s.bc_weight}};
}

void sac_from_json(const json& j, sacmeta::SacConfig& s) {
  s.width = j.at("width").get<std::size_t>();
  s.depth = j.at("depth").get<std::size_t>();
  s.batch = j.at("batch").get<std::size_t>();
  s.lr = j.at("lr").get<double>();
  s.gamma = j.at("gamma").get<double>();
  s.polyak = j.at("polyak").get<double>();
  s.alpha_ent = j.at("alpha_ent").get<double>();
  s.bc_weight = j.at("bc_weight").get<double>();
}

json to_json_doc(const RunConfig& c) {
  const auto& e = c.encoder;
  const auto& w = e.weights;
  json j;
  j["family"] = std::string(envs::to_string(c.family));
  j["n_train"] = c.n_train;
  j["n_test"] = c.n_test;
  j["data_seed"] = c.data_seed;
  j["seed"] = c.seed;
  j["seeds"] = c.seeds;
  j["out_dir"] = c.out_dir;
  j["collect"] = {{"steps", c.collect.steps},
                  {"random_steps", c.collect.random_steps},
                  {"horizon", c.collect.horizon},
                  {"sac", sac_to_json(c.collect.sac)}};
  j["encoder"] = {{"latent_dim", e.latent_dim},
                  {"hidden", e.hidden},
                  {"depth", e.depth},
                  {"n_ctx", e.n_ctx},
                  {"batch", e.batch},
                  {"steps", e.steps},
                  {"lr", e.lr},
                  {"causal", e.causal},
                  {"combine", e.combine},
                  {"neg_count", e.neg_count},
                  {"batch_negatives", e.batch_negatives},
                  {"weights",
                   {{"alpha", w.alpha},
                    {"beta", w.beta},
                    {"delta", w.delta},
                    {"kappa", w.kappa},
                    {"nu", w.nu},
                    {"c_dag", w.c_dag},
                    {"sigma_noise", w.sigma_noise},
                    {"varsigma", w.varsigma}}}};
  j["policy"] = {{"rl_steps", c.policy.rl_steps},
                 {"tasks_per_batch", c.policy.tasks_per_batch},
                 {"eval_every", c.policy.eval_every},
                 {"sac", sac_to_json(c.policy.sac)}};
  j["eval"] = {{"episodes", c.eval.episodes},
               {"horizon", c.eval.horizon},
               {"stochastic", c.eval.stochastic},
               {"embed_samples", c.embed_samples}};
  return j;
}

RunConfig from_json_doc(const json& j) {
  RunConfig c;
  c.family = envs::parse_family(j.at("family").get<std::string>());
  c.n_train = j.at("n_train").get<int>();
  c.n_test = j.at("n_test").get<int>();
  c.data_seed = j.at("data_seed").get<std::uint64_t>();
  c.seed = j.at("seed").get<std::uint64_t>();
  c.seeds = j.at("seeds").get<std::vector<std::uint64_t>>();
  c.out_dir = j.at("out_dir").get<std::string>();
  const auto& col = j.at("collect");
  c.collect.steps = col.at("steps").get<std::size_t>();
  c.collect.random_steps = col.at("random_steps").get<std::size_t>();
  c.collect.horizon = col.at("horizon").get<int>();
  sac_from_json(col.at("sac"), c.collect.sac);
  const auto& e = j.at("encoder");
  c.encoder.latent_dim = e.at("latent_dim").get<std::size_t>();
  c.encoder.hidden = e.at("hidden").get<std::size_t>();
  c.encoder.depth = e.at("depth").get<std::size_t>();
  c.encoder.n_ctx = e.at("n_ctx").get<std::size_t>();
  c.encoder.batch = e.at("batch").get<std::size_t>();
  c.encoder.steps = e.at("steps").get<std::size_t>();
  c.encoder.lr = e.at("lr").get<double>();
  c.encoder.causal = e.at("causal").get<bool>();
  c.encoder.combine = e.at("combine").get<bool>();
  c.encoder.neg_count = e.at("neg_count").get<std::size_t>();
  c.encoder.batch_negatives = e.at("batch_negatives").get<bool>();
  const auto& w = e.at("weights");
  auto& cw = c.encoder.weights;
  cw.alpha = w.at("alpha").get<double>();
  cw.beta = w.at("beta").get<double>();
  cw.delta = w.at("delta").get<double>();
  cw.kappa = w.at("kappa").get<double>();
  cw.nu = w.at("nu").get<double>();
  cw.c_dag = w.at("c_dag").get<double>();
  cw.sigma_noise = w.at("sigma_noise").get<double>();
  cw.varsigma = w.at("varsigma").get<double>();
  const auto& p = j.at("policy");
  c.policy.rl_steps = p.at("rl_steps").get<std::size_t>();
  c.policy.tasks_per_batch = p.at("tasks_per_batch").get<std::size_t>();
  c.policy.eval_every = p.at("eval_every").get<std::size_t>();
  sac_from_json(p.at("sac"), c.policy.sac);
  const auto& ev = j.at("eval");
  c.eval.episodes = ev.at("episodes").get<std::size_t>();
  c.eval.horizon = ev.at("horizon").get<int>();
  c.eval.stochastic = ev.at("stochastic").get<bool>();
  c.embed_samples = ev.at("embed_samples").get<std::size_t>();
  return c;
}

// Overlays `src` onto `dst`, which fixes the set of keys and their kinds.
void merge_checked(json& dst, const json& src, const std::string& path) {
  if (!src.is_object()) throw ConfigError("'" + (path.empty() ? std::string("<root>") : path) + "' must be an object");
  for (auto it = src.begin(); it != src.end(); ++it) {
    const std::string key = path.empty() ? it.key() : path + "." + it.key();
    if (!dst.contains(it.key())) throw ConfigError("unknown config key '" + key + "'");
    json& slot = dst[it.key()];
    const json& v = it.value();
    if (slot.is_object()) {
      merge_checked(slot, v, key);
      continue;
    }
    const bool ok = slot.is_number_unsigned() || slot.is_number_integer()
                        ? v.is_number_integer() && (!slot.is_number_unsigned() || v.get<std::int64_t>() >= 0)
                    : slot.is_number_float() ? v.is_number()
                    : slot.is_boolean()      ? v.is_boolean()
                    : slot.is_string()       ? v.is_string()
                    : slot.is_array()        ? v.is_array()
                                             : false;
    if (!ok) throw ConfigError("config key '" + key + "' has the wrong type: " + v.dump());
    slot = v;
  }
}

json apply_override(const std::string& kv) {
  const auto eq = kv.find('=');
  if (eq == std::string::npos || eq == 0) throw ConfigError("override '" + kv + "' is not key=value");
  const std::string path = kv.substr(0, eq), text = kv.substr(eq + 1);
  json value;
  try {
    value = json::parse(text);
  } catch (const json::exception&) {
    value = text;
  }
  json doc = value;
  std::string rest = path;
  std::vector<std::string> parts;
  for (std::size_t pos; (pos = rest.find('.')) != std::string::npos; rest = rest.substr(pos + 1)) {
    parts.push_back(rest.substr(0, pos));
  }
  parts.push_back(rest);
  for (auto it = parts.rbegin(); it != parts.rend(); ++it) {
    if (it->empty()) throw ConfigError("override '" + kv + "' has an empty key segment");
    doc = json{{*it, doc}};
  }
  return doc;
}

}  // namespace

void RunConfig::validate() const {
  if (n_train < 1 || n_test < 1) throw ConfigError("n_train and n_test must be positive");
  if (seeds.empty()) throw ConfigError("seeds must not be empty");
  if (out_dir.empty()) throw ConfigError("out_dir must not be empty");
  if (collect.steps == 0 || collect.horizon < 1) throw ConfigError("collect sizes must be positive");
  if (collect.sac.batch == 0 || collect.sac.width == 0 || collect.sac.depth == 0) {
    throw ConfigError("collect.sac sizes must be positive");
  }
  if (collect.steps < collect.sac.batch) throw ConfigError("collect.steps must be at least collect.sac.batch");
  encoder.validate();
  if (collect.steps < encoder.n_ctx) throw ConfigError("collect.steps must cover one encoder context");
  policy.validate();
  if (eval.episodes == 0 || eval.horizon < 1) throw ConfigError("eval sizes must be positive");
  if (embed_samples == 0) throw ConfigError("eval.embed_samples must be positive");
}

std::string default_config_json() { return to_json_doc(RunConfig{}).dump(2); }

std::string to_json(const RunConfig& cfg) { return to_json_doc(cfg).dump(2); }

RunConfig parse_config(const std::string& text, const std::vector<std::string>& overrides) {
  json doc = to_json_doc(RunConfig{});
  try {
    merge_checked(doc, json::parse(text), "");
    for (const auto& o : overrides) merge_checked(doc, apply_override(o), "");
  } catch (const json::exception& e) {
    throw ConfigError(std::string("invalid config: ") + e.what());
  }
  RunConfig cfg;
  try {
    cfg = from_json_doc(doc);
  } catch (const json::exception& e) {
    throw ConfigError(std::string("invalid config: ") + e.what());
  }
  cfg.validate();
  return cfg;
}

RunConfig load_config(const std::filesystem::path& path, const std::vector<std::string>& overrides) {
  std::ifstream is(path);
  if (!is) throw ConfigError("cannot open config file " + path.string());
  std::stringstream ss;
  ss << is.rdbuf();
  return parse_config(ss.str(), overrides);
}

}  // namespace comrl::cli
