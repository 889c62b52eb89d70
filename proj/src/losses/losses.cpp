#include "comrl/losses/losses.hpp"

#include "comrl/errors.hpp"

#include <cmath>
#include <set>

namespace comrl::losses {

using nd::Tape;
using nd::Tensor;
using nd::Var;

void LossWeights::validate() const {
  for (double v : {alpha, beta, delta, kappa, nu, c_dag, sigma_noise, varsigma}) {
    if (!std::isfinite(v)) throw ConfigError("loss weights must be finite");
  }
  if (!(c_dag > 0.0)) throw ConfigError("c_dag must be positive");
  if (!(varsigma > 0.0)) throw ConfigError("varsigma must be positive");
  if (sigma_noise < 0.0) throw ConfigError("sigma_noise must be non-negative");
}

namespace {

void require_positive(std::string_view what, Var v) {
  for (double x : v.value().values()) {
    if (!(x > 0.0)) throw NumericalError(std::string(what) + " must be strictly positive");
  }
}

}  // namespace

Var diag_gaussian_kl(Var mu_q, Var sigma_q, Var mu_p, Var sigma_p) {
  require_positive("KL: sigma_q", sigma_q);
  require_positive("KL: sigma_p", sigma_p);
  // log(sp / sq) + (sq^2 + (mq - mp)^2) / (2 sp^2) - 1/2
  const Var var_p = nd::square(sigma_p);
  const Var per_dim = nd::log(sigma_p) - nd::log(sigma_q) +
                      (nd::square(sigma_q) + nd::square(mu_q - mu_p)) / (2.0 * var_p) - 0.5;
  return nd::sum_cols(per_dim);
}

ElboTerms elbo_terms(Var tau, Var tau_hat, Var eps_mu, Var eps_sigma, Var causal_matrix, Var prior_mu,
                     Var prior_sigma) {
  Tape& tape = *tau.tape();
  const std::size_t n = eps_mu.cols();
  if (causal_matrix.rows() != n || causal_matrix.cols() != n) throw ShapeError("elbo: causal matrix dims");
  require_positive("elbo: eps_sigma", eps_sigma);
  require_positive("elbo: prior_sigma", prior_sigma);

  const Var recon = -0.5 * nd::mean(nd::sum_cols(nd::square(tau - tau_hat)));

  const Var zeros = tape.constant(Tensor(eps_mu.rows(), n, 0.0));
  const Var ones = tape.constant(Tensor(eps_mu.rows(), n, 1.0));
  const Var kl_eps = nd::mean(diag_gaussian_kl(eps_mu, eps_sigma, zeros, ones));

  // z = M^-1 eps with M = I - A^T: mean M^-1 mu, variance diag(M^-1 S M^-T).
  const Var z_mu = nd::transpose(nd::solve(causal_matrix, nd::transpose(eps_mu)));
  const Var m_inv = nd::solve(causal_matrix, tape.constant(Tensor::identity(n)));
  const Var z_var = nd::matmul(nd::square(eps_sigma), nd::transpose(nd::square(m_inv)));
  const Var kl_z = nd::mean(diag_gaussian_kl(z_mu, nd::sqrt(z_var), prior_mu, prior_sigma));

  return ElboTerms{recon, kl_eps, kl_z, recon - kl_eps - kl_z};
}

Var elbo(Var tau, Var tau_hat, Var eps_mu, Var eps_sigma, Var causal_matrix, Var prior_mu, Var prior_sigma) {
  return elbo_terms(tau, tau_hat, eps_mu, eps_sigma, causal_matrix, prior_mu, prior_sigma).elbo;
}

Var dag_penalty(Var adjacency, double c_dag) {
  const std::size_t n = adjacency.rows();
  if (adjacency.cols() != n) throw ShapeError("dag_penalty: adjacency must be square");
  Tape& tape = *adjacency.tape();
  const Var m = tape.constant(Tensor::identity(n)) + (c_dag / static_cast<double>(n)) * nd::square(adjacency);
  Var power = m;
  for (std::size_t k = 1; k < n; ++k) power = nd::matmul(power, m);
  return nd::trace(power) - static_cast<double>(n);
}

double dag_penalty(const Tensor& adjacency, double c_dag) {
  Tape tape;
  return dag_penalty(tape.constant(adjacency), c_dag).item();
}

Var task_info_penalty(Var u_n, Var adjacency) {
  if (adjacency.rows() != u_n.cols() || adjacency.cols() != u_n.cols()) {
    throw ShapeError("task_info_penalty: u is " + u_n.value().shape_str() + ", A is " + adjacency.value().shape_str());
  }
  // rows of U A are (A^T u)^T
  return nd::mean(nd::sum_cols(nd::square(u_n - nd::sigmoid(nd::matmul(u_n, adjacency)))));
}

Var causal_loss(Var elbo_value, Var dag, Var task_info, const LossWeights& w) {
  return -elbo_value + w.alpha * dag + w.beta * task_info;
}

double causal_loss(double elbo_value, double dag, double task_info, const LossWeights& w) {
  return -elbo_value + w.alpha * dag + w.beta * task_info;
}

Var contrastive_loss(Var triplet, Var hardest, const LossWeights& w) {
  return w.delta * triplet + w.kappa * hardest;
}

double contrastive_loss(double triplet, double hardest, const LossWeights& w) {
  return w.delta * triplet + w.kappa * hardest;
}

Var combined_loss(Var contrastive, Var info, const LossWeights& w) { return contrastive + w.nu * info; }

double combined_loss(double contrastive, double info, const LossWeights& w) { return contrastive + w.nu * info; }

std::vector<dataset::TaskContext> make_negatives(const dataset::TaskContext& ctx, double sigma, std::size_t count,
                                                 nd::Rng& rng, std::size_t state_dim, std::size_t action_dim) {
  if (count < 1) throw std::invalid_argument("make_negatives: count must be >= 1");
  const std::size_t continuous = 2 * state_dim + action_dim + 1;  // everything but the terminal flag
  if (ctx.data.cols() != continuous + 1) throw ShapeError("make_negatives: context width");
  std::vector<dataset::TaskContext> out(count, ctx);
  for (auto& neg : out) {
    for (std::size_t r = 0; r < neg.data.rows(); ++r)
      for (std::size_t c = 0; c < continuous; ++c) neg.data(r, c) += sigma * rng.normal();
  }
  return out;
}

namespace {

Var normalize_rows(Var x) {
  const Var norms = nd::sqrt(nd::sum_cols(nd::square(x)));
  for (double v : norms.value().values()) {
    if (!(v > 0.0)) throw NumericalError("cosine similarity of a zero vector");
  }
  return nd::div_colvec(x, norms);
}

}  // namespace

Var info_nce(Var anchors, Var positives, std::span<const Var> negatives) {
  const std::size_t p = anchors.rows();
  if (positives.rows() != p || positives.cols() != anchors.cols() || negatives.size() != p) {
    throw ShapeError("info_nce: anchors, positives and negative sets disagree");
  }
  const Var a_hat = normalize_rows(anchors);
  std::vector<Var> per_anchor;
  per_anchor.reserve(p);
  for (std::size_t i = 0; i < p; ++i) {
    std::vector<Var> cands{nd::slice_rows(positives, i, i + 1)};
    if (negatives[i].valid() && negatives[i].rows() > 0) cands.push_back(negatives[i]);
    const Var c_hat = normalize_rows(nd::concat_rows(cands));
    const Var logits = nd::matmul(nd::slice_rows(a_hat, i, i + 1), nd::transpose(c_hat));  // 1 x (1 + K)
    per_anchor.push_back(nd::logsumexp_rows(logits) - nd::slice_cols(logits, 0, 1));
  }
  return nd::mean(nd::concat_rows(per_anchor));
}

namespace {

std::size_t distinct_labels(std::span<const int> labels) {
  return std::set<int>(labels.begin(), labels.end()).size();
}

}  // namespace

Var triplet_adaptive(Var z, std::span<const int> labels) {
  const std::size_t b = z.rows();
  if (labels.size() != b) throw ShapeError("triplet_adaptive: one label per row required");
  if (distinct_labels(labels) < 2) throw std::invalid_argument("triplet_adaptive: batch needs at least two tasks");
  std::vector<std::size_t> pos_idx, neg_idx;
  for (std::size_t i = 0; i < b; ++i)
    for (std::size_t j = 0; j < b; ++j) {
      if (j == i || labels[j] != labels[i]) continue;
      for (std::size_t k = 0; k < b; ++k) {
        if (labels[k] == labels[i]) continue;
        pos_idx.push_back(i * b + j);
        neg_idx.push_back(i * b + k);
      }
    }
  if (pos_idx.empty()) throw std::invalid_argument("triplet_adaptive: no task has two contexts in the batch");
  const Var d = nd::pairwise_sqdist(z);
  const Var d_pos = nd::gather(d, std::move(pos_idx));
  const Var d_neg = nd::gather(d, std::move(neg_idx));
  return nd::sum(nd::relu(d_pos - d_neg + nd::exp(-d_pos)));
}

Var hardest_negative(Var z, std::span<const int> labels, double varsigma) {
  const std::size_t b = z.rows();
  if (labels.size() != b) throw ShapeError("hardest_negative: one label per row required");
  if (distinct_labels(labels) < 2) throw std::invalid_argument("hardest_negative: batch needs at least two tasks");
  std::vector<std::size_t> cross;
  for (std::size_t i = 0; i < b; ++i)
    for (std::size_t k = i + 1; k < b; ++k)
      if (labels[i] != labels[k]) cross.push_back(i * b + k);
  const Var d_max = nd::max_all(nd::gather(nd::pairwise_sqdist(z), std::move(cross)));
  return nd::rdiv(1.0, d_max + varsigma);
}

}  // namespace comrl::losses
