#pragma once

#include "comrl/dataset/collect.hpp"
#include "comrl/encoder/causal_vae.hpp"
#include "comrl/envs/point_env.hpp"
#include "comrl/evalviz/eval.hpp"
#include "comrl/sacmeta/meta_train.hpp"

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

namespace comrl::cli {

struct RunConfig {
  envs::TaskFamily family = envs::TaskFamily::PointVel;
  int n_train = 10;
  int n_test = 10;
  std::uint64_t data_seed = 0;  // task sampling and behaviour-policy collection
  std::uint64_t seed = 0;       // training and evaluation
  std::vector<std::uint64_t> seeds{0, 1, 2, 3, 4};
  std::string out_dir = "runs/default";
  dataset::CollectConfig collect;
  encoder::EncoderConfig encoder;
  sacmeta::MetaTrainConfig policy;
  evalviz::EvalConfig eval;
  std::size_t embed_samples = 200;

  void validate() const;
};

/// Defaults of every key, as JSON text.
std::string default_config_json();
std::string to_json(const RunConfig& cfg);

/// Parses a config document layered over the defaults. Unknown keys, type
/// mismatches and invalid values throw ConfigError. Each override has the
/// form dotted.key.path=value, value being JSON or a bare string.
RunConfig parse_config(const std::string& text, const std::vector<std::string>& overrides = {});
RunConfig load_config(const std::filesystem::path& path, const std::vector<std::string>& overrides = {});

}  // namespace comrl::cli
