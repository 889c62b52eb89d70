#pragma once

#include "comrl/ndmath/adam.hpp"
#include "comrl/ndmath/autodiff.hpp"
#include "comrl/ndmath/mlp.hpp"
#include "comrl/ndmath/rng.hpp"

#include <span>
#include <vector>

namespace comrl::sacmeta {

struct SacConfig {
  std::size_t width = 256;
  std::size_t depth = 3;  // hidden layers per network
  std::size_t batch = 256;
  double lr = 3e-4;
  double gamma = 0.99;
  double polyak = 0.995;
  double alpha_ent = 0.2;
  /// Weight of an optional behaviour-cloning term in the actor loss.
  double bc_weight = 0.0;
  double log_std_min = -20.0;
  double log_std_max = 2.0;
};

/// Minibatch of transitions with the task representation of each row. z may
/// have zero columns (single-task SAC).
struct SacBatch {
  nd::Tensor s, a, r, s_next, terminal, z;
  std::size_t size() const { return s.rows(); }
};

struct PolicySample {
  nd::Var action;    // tanh-squashed sample
  nd::Var log_prob;  // B x 1
  nd::Var mean_action;
};

class SacAgent {
 public:
  SacAgent() = default;
  SacAgent(std::size_t state_dim, std::size_t action_dim, std::size_t z_dim, SacConfig cfg, nd::Rng& rng);

  /// Policy action for one state. rng == nullptr gives the deterministic
  /// mean action tanh(mu).
  std::vector<double> act(std::span<const double> s, std::span<const double> z, nd::Rng* rng) const;

  struct UpdateStats {
    double critic_loss = 0.0;
    double actor_loss = 0.0;
  };
  /// One critic step, one actor step, then a Polyak update of the targets.
  UpdateStats update(const SacBatch& batch, nd::Rng& rng);

  PolicySample sample(nd::Tape& tape, nd::Var obs, nd::Rng& rng, bool track);
  nd::Var q_value(nd::Tape& tape, nd::Mlp& q, nd::Var s, nd::Var a, nd::Var z, bool track);

  std::vector<nd::Parameter*> actor_parameters() { return actor.parameters(); }
  std::vector<nd::Parameter*> critic_parameters();
  std::vector<nd::Parameter*> target_parameters();
  /// Every tensor in checkpoint order: actor, q1, q2, q1_target, q2_target.
  std::vector<nd::Parameter*> all_parameters();

  std::size_t state_dim() const { return state_dim_; }
  std::size_t action_dim() const { return action_dim_; }
  std::size_t z_dim() const { return z_dim_; }
  const SacConfig& config() const { return cfg_; }

  nd::Mlp actor, q1, q2, q1_target, q2_target;
  nd::AdamState actor_opt, critic_opt;

 private:
  std::size_t state_dim_ = 0, action_dim_ = 0, z_dim_ = 0;
  SacConfig cfg_;
};

nd::Var critic_loss(nd::Tape& tape, SacAgent& agent, const SacBatch& batch, nd::Rng& rng);
nd::Var actor_loss(nd::Tape& tape, SacAgent& agent, const SacBatch& batch, nd::Rng& rng);

/// target <- rho * target + (1 - rho) * online.
void polyak_update(std::span<nd::Parameter* const> online, std::span<nd::Parameter* const> target, double rho);

/// Log-density of a = tanh(u), u ~ N(mean, exp(log_std)^2), summed over
/// dimensions. Scalar reference used by tests.
double tanh_gaussian_log_prob(std::span<const double> u, std::span<const double> mean,
                              std::span<const double> log_std);

}  // namespace comrl::sacmeta
