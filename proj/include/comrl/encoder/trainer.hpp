#pragma once

#include "comrl/encoder/causal_vae.hpp"

#include <cstdint>
#include <filesystem>
#include <optional>
#include <ostream>
#include <span>
#include <vector>

namespace comrl::encoder {

/// One training batch in model space (standardised contexts).
/// Rows [0, pairs) are anchors, rows [pairs, 2 pairs) their same-task
/// positives. neg_tau holds neg_per_anchor noisy copies of each anchor.
struct EncoderBatch {
  nd::Tensor tau;  // 2P x input_dim
  nd::Tensor u_n;  // 2P x n
  std::vector<int> labels;
  std::size_t pairs = 0;
  nd::Tensor neg_tau;  // P*K x input_dim
  nd::Tensor neg_u;    // P*K x n
  std::size_t neg_per_anchor = 0;
};

struct EncoderLossTerms {
  nd::Var total, neg_elbo, dag, task_info, info_nce, triplet, hardest, combine;
};

/// Values of the logged loss components at one step.
struct EncoderLossRow {
  std::size_t step = 0;
  double total = 0, neg_elbo = 0, dag = 0, task_info = 0, info_nce = 0, triplet = 0, hardest = 0, combine = 0;
};

/// Draws one batch: for every task index in `tasks` a context pair (tau, tau')
/// and, when the model's config combines losses, neg_count noisy copies of tau.
/// goals[k] is the standardised goal of dataset k.
EncoderBatch make_encoder_batch(const CausalVae& model, std::span<const dataset::ContextSampler> samplers,
                                std::span<const double> goals, std::span<const std::size_t> tasks, nd::Rng& rng);

/// Total loss L_causal (+ L_combine) on one batch. rng == nullptr encodes
/// with eps = eps_mu.
EncoderLossTerms encoder_loss(nd::Tape& tape, CausalVae& model, const EncoderBatch& batch, nd::Rng* rng);

struct EncoderTrainResult {
  CausalVae model;
  std::vector<EncoderLossRow> log;
};

/// Runs cfg.steps Adam updates on the training datasets. On a non-finite loss
/// the last batch is written to `dump_path` (when given) and NumericalError
/// is thrown.
EncoderTrainResult train_encoder(std::span<const dataset::OfflineTaskDataset> train, const EncoderConfig& cfg,
                                 std::uint64_t seed, std::optional<std::filesystem::path> dump_path = {});

void write_loss_csv(std::ostream& os, std::span<const EncoderLossRow> rows);

}  // namespace comrl::encoder
