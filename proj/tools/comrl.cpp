#include "comrl/cli/commands.hpp"

#include "CLI11.hpp"

#include <iostream>

int main(int argc, char** argv) {
  CLI::App app{"Causal contrastive offline meta-RL on point-mass tasks"};
  app.require_subcommand(1, 1);

  std::string config_path;
  std::optional<std::uint64_t> seed;
  std::string out, data, encoder, policy;
  bool force = false;
  std::vector<std::string> sets;

  for (const char* name : {"collect", "train-encoder", "train-policy", "eval", "embed", "ablate"}) {
    CLI::App* sub = app.add_subcommand(name);
    sub->add_option("--config", config_path, "JSON run config")->required();
    sub->add_option("--seed", seed, "seed override");
    sub->add_option("--out", out, "run directory (default: out_dir from the config)");
    sub->add_flag("--force", force, "overwrite existing outputs");
    sub->add_option("--data", data, "dataset directory (default: <out>/data)");
    sub->add_option("--encoder", encoder, "encoder checkpoint (default: <out>/encoder.cenc)");
    sub->add_option("--policy", policy, "policy checkpoint (default: <out>/policy.cpol)");
    sub->add_option("--set", sets, "override a config key, e.g. --set encoder.steps=100");
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : 2;
  }

  try {
    comrl::cli::CommandOptions opt;
    opt.cfg = comrl::cli::load_config(config_path, sets);
    opt.seed = seed;
    opt.out = out.empty() ? std::filesystem::path(opt.cfg.out_dir) : std::filesystem::path(out);
    opt.force = force;
    if (!data.empty()) opt.data_dir = data;
    if (!encoder.empty()) opt.encoder_path = encoder;
    if (!policy.empty()) opt.policy_path = policy;
    opt.log = &std::cerr;
    return comrl::cli::run_command(app.get_subcommands().front()->get_name(), opt);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return comrl::cli::exit_code_for(e);
  }
}
