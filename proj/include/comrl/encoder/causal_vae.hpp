#pragma once

#include "comrl/dataset/dataset.hpp"
#include "comrl/losses/losses.hpp"
#include "comrl/ndmath/autodiff.hpp"
#include "comrl/ndmath/mlp.hpp"
#include "comrl/ndmath/rng.hpp"

#include <array>
#include <filesystem>
#include <optional>
#include <utility>

namespace comrl::encoder {

inline constexpr double kInfoSigmaFloor = 1e-6;

struct EncoderConfig {
  std::size_t latent_dim = 16;  // multiple of 4
  std::size_t hidden = 64;
  std::size_t depth = 2;
  std::size_t n_ctx = dataset::kDefaultContextLength;
  std::size_t batch = 32;  // contexts per step, two per sampled task
  std::size_t steps = 40000;
  double lr = 3e-4;
  /// Learn A with the DAG and task-info penalties and a u-conditioned prior.
  /// When false, A stays zero and the prior is N(0, I).
  bool causal = true;
  /// Add the InfoNCE, triplet and hardest-negative terms.
  bool combine = true;
  std::size_t neg_count = 8;
  /// Also use other-task contexts of the batch as InfoNCE negatives.
  bool batch_negatives = true;
  losses::LossWeights weights;

  void validate() const;
};

/// Per-column standardisation of context records, fitted on training data.
struct FeatureScaler {
  nd::Tensor mean;  // 1 x record_width
  nd::Tensor std;   // 1 x record_width

  static FeatureScaler fit(std::span<const dataset::OfflineTaskDataset> datasets);
  static FeatureScaler identity(std::size_t width);
  dataset::TaskContext apply(const dataset::TaskContext& ctx) const;
};

/// u = (g_info, s_info, a_info, r_info) and its block replication over the
/// latent dimensions, u_n[i] = u4[floor(4 i / n)].
struct TaskInfo {
  std::array<double, 4> u4{};
  nd::Tensor u_n;  // 1 x n
};

/// s/a/r entries are single Gaussian draws from the empirical mean and
/// variance of the matching columns of ctx (states cover s and s_next).
/// Without a goal g_info is 0.
TaskInfo build_task_info(const dataset::TaskContext& ctx, std::optional<double> goal, nd::Rng& rng,
                         std::size_t latent_dim, std::size_t state_dim = envs::kStateDim,
                         std::size_t action_dim = envs::kActionDim);

nd::Tensor replicate_info(const std::array<double, 4>& u4, std::size_t latent_dim);

struct CausalLatent {
  nd::Tensor eps_mu;
  nd::Tensor eps_sigma;
  nd::Tensor eps;
  nd::Tensor z;
};

/// Causal variational autoencoder: encoder E(tau, u) -> (eps_mu, eps_sigma),
/// causal layer z = (I - A^T)^-1 eps, decoder D(z) -> tau_hat and the
/// factorised prior p(z_i | u_i) = N(lambda1(u_i), lambda2(u_i)^2).
class CausalVae {
 public:
  CausalVae() = default;
  CausalVae(EncoderConfig cfg, FeatureScaler scaler, std::size_t record_width, nd::Rng& rng);

  struct Forward {
    nd::Var eps_mu, eps_sigma, eps, z;
    nd::Var adjacency;      // A with its diagonal masked out
    nd::Var causal_matrix;  // I - A^T
  };

  /// Batched encode of standardised, flattened contexts (B x input_dim) and
  /// replicated task info (B x n). rng == nullptr uses eps = eps_mu.
  Forward encode(nd::Tape& tape, nd::Var tau, nd::Var u_n, nd::Rng* rng);
  nd::Var adjacency(nd::Tape& tape);
  nd::Var decode(nd::Tape& tape, nd::Var z);
  std::pair<nd::Var, nd::Var> prior(nd::Tape& tape, nd::Var u_n);

  // Tape-free paths. Contexts are raw; standardisation happens inside.
  CausalLatent encode(const dataset::TaskContext& ctx, const TaskInfo& info, nd::Rng& rng) const;
  nd::Tensor encode_mean(const dataset::TaskContext& ctx, const TaskInfo& info) const;
  nd::Tensor decode(const nd::Tensor& z) const;
  std::pair<nd::Tensor, nd::Tensor> prior_params(const TaskInfo& info) const;
  /// Task info computed on the standardised context, as the model sees it.
  TaskInfo task_info(const dataset::TaskContext& raw_ctx, std::optional<double> goal, nd::Rng& rng) const;
  /// Meta-test representation: task info without goal, then encode_mean.
  nd::Tensor represent(const dataset::TaskContext& ctx, nd::Rng& rng) const;

  /// Standardised context flattened into a 1 x input_dim row.
  nd::Tensor flatten(const dataset::TaskContext& raw_ctx) const;

  const EncoderConfig& config() const { return cfg_; }
  const FeatureScaler& scaler() const { return scaler_; }
  std::size_t latent_dim() const { return cfg_.latent_dim; }
  std::size_t record_width() const { return record_width_; }
  std::size_t input_dim() const { return cfg_.n_ctx * record_width_; }

  /// Current A with zero diagonal.
  nd::Tensor adjacency_value() const;
  /// Overwrites A (diagonal is forced to zero).
  void set_adjacency(const nd::Tensor& a);
  /// z = (I - A^T)^-1 eps for a 1 x n row.
  nd::Tensor apply_causal_layer(const nd::Tensor& eps) const;

  /// Parameters updated by the optimiser (A only when causal).
  std::vector<nd::Parameter*> trainable_parameters();
  /// Everything persisted, in declaration order.
  std::vector<nd::Parameter*> all_parameters();
  std::vector<const nd::Parameter*> all_parameters() const;

  /// Re-zeroes the diagonal of A after an optimiser step.
  void enforce_zero_diagonal();

  void save(const std::filesystem::path& path) const;
  static CausalVae load(const std::filesystem::path& path);

 private:
  nd::Tensor encoder_out(const dataset::TaskContext& ctx, const TaskInfo& info) const;

  EncoderConfig cfg_;
  FeatureScaler scaler_;
  std::size_t record_width_ = 0;
  nd::Mlp enc_;
  nd::Mlp dec_;
  nd::Mlp lambda_;          // scalar u_i -> (mean, raw scale), shared across dimensions
  nd::Parameter prior_bias_;  // 1 x 2n per-dimension offsets
  nd::Parameter a_;
  nd::Tensor off_diagonal_;
};

std::string config_to_json(const EncoderConfig& cfg);
EncoderConfig config_from_json(const std::string& text);

}  // namespace comrl::encoder
