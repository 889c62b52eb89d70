#pragma once

#include "comrl/dataset/dataset.hpp"
#include "comrl/ndmath/autodiff.hpp"
#include "comrl/ndmath/rng.hpp"

#include <span>
#include <vector>

namespace comrl::losses {

struct LossWeights {
  double alpha = 0.3;   // DAG penalty
  double beta = 1.0;    // task-info penalty
  double delta = 2.0;   // triplet
  double kappa = 2.0;   // hardest negative
  double nu = 1.0;      // InfoNCE
  double c_dag = 4.0;
  double sigma_noise = 0.1;  // std of the noise that turns a context into a negative
  double varsigma = 1e-6;

  /// Throws ConfigError on non-finite weights, c_dag <= 0 or varsigma <= 0.
  void validate() const;
};

/// Per-term breakdown of the ELBO, each a batch mean.
struct ElboTerms {
  nd::Var reconstruction;  // -1/2 ||tau - tau_hat||^2
  nd::Var kl_eps;          // KL(q(eps | tau, u) || N(0, I))
  nd::Var kl_z;            // KL(q(z) || p(z | u))
  nd::Var elbo;
};

/// Evidence lower bound of the causal VAE, averaged over the batch.
///   tau, tau_hat          B x D (standardised context and its reconstruction)
///   eps_mu, eps_sigma     B x n posterior of the exogenous code
///   causal_matrix         n x n, I - A^T
///   prior_mu, prior_sigma B x n parameters of p(z | u)
/// q(z) is the Gaussian push-forward of q(eps) through the causal layer,
/// keeping only the diagonal of its covariance.
ElboTerms elbo_terms(nd::Var tau, nd::Var tau_hat, nd::Var eps_mu, nd::Var eps_sigma, nd::Var causal_matrix,
                     nd::Var prior_mu, nd::Var prior_sigma);
nd::Var elbo(nd::Var tau, nd::Var tau_hat, nd::Var eps_mu, nd::Var eps_sigma, nd::Var causal_matrix,
             nd::Var prior_mu, nd::Var prior_sigma);

/// Row-wise KL between diagonal Gaussians, summed over columns (B x 1).
nd::Var diag_gaussian_kl(nd::Var mu_q, nd::Var sigma_q, nd::Var mu_p, nd::Var sigma_p);

/// tr((I + c/n A o A)^n) - n, by n-1 repeated products.
nd::Var dag_penalty(nd::Var adjacency, double c_dag);
double dag_penalty(const nd::Tensor& adjacency, double c_dag);

/// Batch mean of ||u - sigmoid(A^T u)||^2 with u the rows of u_n (B x n).
nd::Var task_info_penalty(nd::Var u_n, nd::Var adjacency);

/// -elbo + alpha L_A + beta L_u
nd::Var causal_loss(nd::Var elbo_value, nd::Var dag, nd::Var task_info, const LossWeights& w);
double causal_loss(double elbo_value, double dag, double task_info, const LossWeights& w);

/// delta L_triplet + kappa L_hardest
nd::Var contrastive_loss(nd::Var triplet, nd::Var hardest, const LossWeights& w);
double contrastive_loss(double triplet, double hardest, const LossWeights& w);

/// L_contrastive + nu L_info
nd::Var combined_loss(nd::Var contrastive, nd::Var info, const LossWeights& w);
double combined_loss(double contrastive, double info, const LossWeights& w);

/// `count` copies of ctx with i.i.d. N(0, sigma^2) added to every s, a,
/// s_next and r entry. Terminal flags are copied unchanged.
std::vector<dataset::TaskContext> make_negatives(const dataset::TaskContext& ctx, double sigma, std::size_t count,
                                                 nd::Rng& rng, std::size_t state_dim = envs::kStateDim,
                                                 std::size_t action_dim = envs::kActionDim);

/// InfoNCE with cosine similarity as critic, averaged over anchors:
///   -log exp(C(z, z+)) / (exp(C(z, z+)) + sum_neg exp(C(z, z-)))
/// anchors and positives are P x n; negatives[i] is K_i x n (K_i may be 0).
nd::Var info_nce(nd::Var anchors, nd::Var positives, std::span<const nd::Var> negatives);

/// Sum over (i, j same task, j != i, k other task) of
/// max(0, d_ij - d_ik + exp(-d_ij)) with d the squared Euclidean distance.
nd::Var triplet_adaptive(nd::Var z, std::span<const int> labels);

/// 1 / (max over cross-task pairs of d_ik + varsigma).
nd::Var hardest_negative(nd::Var z, std::span<const int> labels, double varsigma);

}  // namespace comrl::losses
