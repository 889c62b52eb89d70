#include "comrl/sacmeta/sac.hpp"

#include "comrl/errors.hpp"

#include <cmath>
#include <numbers>

namespace comrl::sacmeta {

using nd::Tape;
using nd::Tensor;
using nd::Var;

namespace {

nd::MlpSpec net_spec(std::size_t in, std::size_t out, const SacConfig& cfg) {
  return nd::MlpSpec{in, std::vector<std::size_t>(cfg.depth, cfg.width), out, nd::Activation::ReLU};
}

const double kLog2 = std::numbers::ln2;
const double kHalfLog2Pi = 0.5 * std::log(2.0 * std::numbers::pi);

}  // namespace

SacAgent::SacAgent(std::size_t state_dim, std::size_t action_dim, std::size_t z_dim, SacConfig cfg, nd::Rng& rng)
    : state_dim_(state_dim), action_dim_(action_dim), z_dim_(z_dim), cfg_(cfg) {
  actor = nd::Mlp("actor", net_spec(state_dim + z_dim, 2 * action_dim, cfg), rng);
  q1 = nd::Mlp("q1", net_spec(state_dim + action_dim + z_dim, 1, cfg), rng);
  q2 = nd::Mlp("q2", net_spec(state_dim + action_dim + z_dim, 1, cfg), rng);
  q1_target = q1;
  q2_target = q2;
  actor_opt = nd::make_adam(actor_parameters(), cfg.lr);
  critic_opt = nd::make_adam(critic_parameters(), cfg.lr);
}

std::vector<nd::Parameter*> SacAgent::critic_parameters() {
  auto out = q1.parameters();
  for (auto* p : q2.parameters()) out.push_back(p);
  return out;
}

std::vector<nd::Parameter*> SacAgent::target_parameters() {
  auto out = q1_target.parameters();
  for (auto* p : q2_target.parameters()) out.push_back(p);
  return out;
}

std::vector<nd::Parameter*> SacAgent::all_parameters() {
  auto out = actor.parameters();
  for (auto* p : critic_parameters()) out.push_back(p);
  for (auto* p : target_parameters()) out.push_back(p);
  return out;
}

std::vector<double> SacAgent::act(std::span<const double> s, std::span<const double> z, nd::Rng* rng) const {
  if (s.size() != state_dim_ || z.size() != z_dim_) throw ShapeError("SacAgent::act: input dims");
  Tensor obs(1, state_dim_ + z_dim_);
  for (std::size_t i = 0; i < s.size(); ++i) obs[i] = s[i];
  for (std::size_t i = 0; i < z.size(); ++i) obs[state_dim_ + i] = z[i];
  const Tensor out = actor.forward_value(obs);
  std::vector<double> a(action_dim_);
  for (std::size_t i = 0; i < action_dim_; ++i) {
    const double mu = out[i];
    double u = mu;
    if (rng != nullptr) {
      const double log_std = std::clamp(out[action_dim_ + i], cfg_.log_std_min, cfg_.log_std_max);
      u = mu + std::exp(log_std) * rng->normal();
    }
    a[i] = std::tanh(u);
  }
  return a;
}

PolicySample SacAgent::sample(Tape& tape, Var obs, nd::Rng& rng, bool track) {
  const Var out = actor.forward(tape, obs, track);
  const Var mu = nd::slice_cols(out, 0, action_dim_);
  const Var log_std = nd::clamp(nd::slice_cols(out, action_dim_, 2 * action_dim_), cfg_.log_std_min, cfg_.log_std_max);
  Tensor eta(mu.rows(), mu.cols());
  for (double& v : eta.values()) v = rng.normal();
  Tensor half_eta_sq = eta;
  for (double& v : half_eta_sq.values()) v = -0.5 * v * v - kHalfLog2Pi;
  const Var u = mu + nd::exp(log_std) * tape.constant(std::move(eta));
  // log N(u; mu, sigma) = -eta^2/2 - log sigma - log(2 pi)/2
  const Var gauss = nd::sum_cols(tape.constant(std::move(half_eta_sq)) - log_std);
  // log(1 - tanh(u)^2) = 2 (log 2 - u - softplus(-2u))
  const Var log_det = nd::sum_cols(2.0 * ((-u) - nd::softplus(-2.0 * u) + kLog2));
  return PolicySample{nd::tanh(u), gauss - log_det, nd::tanh(mu)};
}

Var SacAgent::q_value(Tape& tape, nd::Mlp& q, Var s, Var a, Var z, bool track) {
  std::vector<Var> parts{s, a};
  if (z.cols() > 0) parts.push_back(z);
  return q.forward(tape, nd::concat_cols(parts), track);
}

namespace {

Var observation(Tape& tape, const Tensor& s, const Tensor& z) {
  if (z.cols() == 0) return tape.constant(s);
  std::vector<Var> parts{tape.constant(s), tape.constant(z)};
  return nd::concat_cols(parts);
}

void check_batch(const SacBatch& b, const SacAgent& agent) {
  const std::size_t n = b.size();
  if (n == 0 || b.a.rows() != n || b.r.rows() != n || b.s_next.rows() != n || b.terminal.rows() != n ||
      b.z.rows() != n || b.s.cols() != agent.state_dim() || b.a.cols() != agent.action_dim() ||
      b.z.cols() != agent.z_dim() || b.r.cols() != 1 || b.terminal.cols() != 1) {
    throw ShapeError("SacBatch shapes inconsistent with agent");
  }
}

}  // namespace

Var critic_loss(Tape& tape, SacAgent& agent, const SacBatch& batch, nd::Rng& rng) {
  check_batch(batch, agent);
  const SacConfig& cfg = agent.config();
  // Bellman target: no gradient reaches the actor or the target critics.
  Tensor y(batch.size(), 1);
  {
    Tape target_tape;
    const Var obs_next = observation(target_tape, batch.s_next, batch.z);
    const PolicySample next = agent.sample(target_tape, obs_next, rng, false);
    const Var zt = target_tape.constant(batch.z);
    const Var sn = target_tape.constant(batch.s_next);
    const Var q1t = agent.q_value(target_tape, agent.q1_target, sn, next.action, zt, false);
    const Var q2t = agent.q_value(target_tape, agent.q2_target, sn, next.action, zt, false);
    const Tensor& qmin = nd::minimum(q1t, q2t).value();
    const Tensor& lp = next.log_prob.value();
    for (std::size_t i = 0; i < y.rows(); ++i) {
      y[i] = batch.r[i] + cfg.gamma * (1.0 - batch.terminal[i]) * (qmin[i] - cfg.alpha_ent * lp[i]);
    }
    if (!y.all_finite()) throw NumericalError("non-finite Bellman target");
  }
  const Var target = tape.constant(std::move(y));
  const Var s = tape.constant(batch.s);
  const Var a = tape.constant(batch.a);
  const Var z = tape.constant(batch.z);
  const Var q1 = agent.q_value(tape, agent.q1, s, a, z, true);
  const Var q2 = agent.q_value(tape, agent.q2, s, a, z, true);
  return nd::mean(nd::square(q1 - target)) + nd::mean(nd::square(q2 - target));
}

Var actor_loss(Tape& tape, SacAgent& agent, const SacBatch& batch, nd::Rng& rng) {
  check_batch(batch, agent);
  const SacConfig& cfg = agent.config();
  const Var obs = observation(tape, batch.s, batch.z);
  const PolicySample pi = agent.sample(tape, obs, rng, true);
  const Var s = tape.constant(batch.s);
  const Var z = tape.constant(batch.z);
  const Var q1 = agent.q_value(tape, agent.q1, s, pi.action, z, false);
  const Var q2 = agent.q_value(tape, agent.q2, s, pi.action, z, false);
  Var loss = nd::mean(cfg.alpha_ent * pi.log_prob - nd::minimum(q1, q2));
  if (cfg.bc_weight > 0.0) {
    loss = loss + cfg.bc_weight * nd::mean(nd::square(pi.mean_action - tape.constant(batch.a)));
  }
  return loss;
}

SacAgent::UpdateStats SacAgent::update(const SacBatch& batch, nd::Rng& rng) {
  UpdateStats stats;
  {
    Tape tape;
    const Var loss = critic_loss(tape, *this, batch, rng);
    tape.backward(loss);
    stats.critic_loss = loss.item();
    nd::adam_step(critic_parameters(), critic_opt);
  }
  {
    Tape tape;
    const Var loss = actor_loss(tape, *this, batch, rng);
    tape.backward(loss);
    stats.actor_loss = loss.item();
    nd::adam_step(actor_parameters(), actor_opt);
  }
  polyak_update(critic_parameters(), target_parameters(), cfg_.polyak);
  return stats;
}

void polyak_update(std::span<nd::Parameter* const> online, std::span<nd::Parameter* const> target, double rho) {
  if (!(rho >= 0.0 && rho <= 1.0)) throw std::invalid_argument("polyak rho must be in [0, 1]");
  if (online.size() != target.size()) throw ShapeError("polyak_update: parameter count mismatch");
  for (std::size_t k = 0; k < online.size(); ++k) {
    Tensor& t = target[k]->value;
    const Tensor& o = online[k]->value;
    if (!t.same_shape(o)) throw ShapeError("polyak_update: shape mismatch");
    for (std::size_t i = 0; i < t.size(); ++i) t[i] = rho * t[i] + (1.0 - rho) * o[i];
  }
}

double tanh_gaussian_log_prob(std::span<const double> u, std::span<const double> mean,
                              std::span<const double> log_std) {
  double lp = 0.0;
  for (std::size_t i = 0; i < u.size(); ++i) {
    const double sigma = std::exp(log_std[i]);
    const double eta = (u[i] - mean[i]) / sigma;
    const double a = std::tanh(u[i]);
    lp += -0.5 * eta * eta - log_std[i] - kHalfLog2Pi - std::log(1.0 - a * a);
  }
  return lp;
}

}  // namespace comrl::sacmeta
