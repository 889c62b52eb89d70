#include "comrl/encoder/trainer.hpp"

#include "comrl/errors.hpp"
#include "comrl/ndmath/adam.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numeric>

namespace comrl::encoder {

using nd::Tape;
using nd::Tensor;
using nd::Var;

namespace {

void copy_row(Tensor& dst, std::size_t r, std::span<const double> src) {
  std::copy(src.begin(), src.end(), dst.row(r).begin());
}

std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

void dump_batch(const std::filesystem::path& path, const EncoderBatch& b) {
  std::ofstream os(path);
  os << "row,label,kind";
  for (std::size_t c = 0; c < b.u_n.cols(); ++c) os << ",u_" << c;
  for (std::size_t c = 0; c < b.tau.cols(); ++c) os << ",tau_" << c;
  os << '\n';
  auto emit = [&](const Tensor& tau, const Tensor& u, std::size_t r, int label, const char* kind) {
    os << r << ',' << label << ',' << kind;
    for (double v : u.row(r)) os << ',' << fmt(v);
    for (double v : tau.row(r)) os << ',' << fmt(v);
    os << '\n';
  };
  for (std::size_t r = 0; r < b.tau.rows(); ++r) emit(b.tau, b.u_n, r, b.labels[r], "context");
  for (std::size_t r = 0; r < b.neg_tau.rows(); ++r) emit(b.neg_tau, b.neg_u, r, -1, "negative");
}

}  // namespace

EncoderBatch make_encoder_batch(const CausalVae& model, std::span<const dataset::ContextSampler> samplers,
                                std::span<const double> goals, std::span<const std::size_t> tasks, nd::Rng& rng) {
  const auto& cfg = model.config();
  const std::size_t p = tasks.size(), n = cfg.latent_dim, d = model.input_dim();
  const std::size_t k = cfg.combine ? cfg.neg_count : 0;
  EncoderBatch b{Tensor(2 * p, d), Tensor(2 * p, n), std::vector<int>(2 * p), p, Tensor(p * k, d), Tensor(p * k, n), k};
  for (std::size_t i = 0; i < p; ++i) {
    const std::size_t t = tasks[i];
    for (std::size_t half = 0; half < 2; ++half) {
      const std::size_t row = half * p + i;
      const dataset::TaskContext ctx = model.scaler().apply(samplers[t].sample(rng));
      const TaskInfo info = build_task_info(ctx, goals[t], rng, n);
      copy_row(b.tau, row, ctx.data.values());
      copy_row(b.u_n, row, info.u_n.values());
      b.labels[row] = samplers[t].dataset().task().task_id;
      if (half == 0 && k > 0) {
        const auto negs = losses::make_negatives(ctx, cfg.weights.sigma_noise, k, rng);
        for (std::size_t j = 0; j < k; ++j) {
          const TaskInfo neg_info = build_task_info(negs[j], goals[t], rng, n);
          copy_row(b.neg_tau, i * k + j, negs[j].data.values());
          copy_row(b.neg_u, i * k + j, neg_info.u_n.values());
        }
      }
    }
  }
  return b;
}

EncoderLossTerms encoder_loss(Tape& tape, CausalVae& model, const EncoderBatch& batch, nd::Rng* rng) {
  const auto& cfg = model.config();
  const auto& w = cfg.weights;
  const std::size_t p = batch.pairs, n = cfg.latent_dim;

  const Var tau = tape.constant(batch.tau);
  const Var u_n = tape.constant(batch.u_n);
  const CausalVae::Forward f = model.encode(tape, tau, u_n, rng);
  const Var tau_hat = model.decode(tape, f.z);
  const auto [prior_mu, prior_sigma] = model.prior(tape, u_n);

  EncoderLossTerms out;
  out.neg_elbo = -losses::elbo(tau, tau_hat, f.eps_mu, f.eps_sigma, f.causal_matrix, prior_mu, prior_sigma);
  out.dag = losses::dag_penalty(f.adjacency, w.c_dag);
  out.task_info = losses::task_info_penalty(u_n, f.adjacency);
  Var total = losses::causal_loss(-out.neg_elbo, out.dag, out.task_info, w);

  const Var zero = tape.constant(Tensor::scalar(0.0));
  out.info_nce = out.triplet = out.hardest = out.combine = zero;
  if (cfg.combine) {
    const Var anchors = nd::slice_rows(f.z, 0, p);
    const Var positives = nd::slice_rows(f.z, p, 2 * p);
    const std::size_t k = batch.neg_per_anchor;
    Var z_neg;
    if (k > 0) {
      z_neg = model.encode(tape, tape.constant(batch.neg_tau), tape.constant(batch.neg_u), rng).z;
    }
    std::vector<Var> negatives;
    negatives.reserve(p);
    for (std::size_t i = 0; i < p; ++i) {
      std::vector<Var> parts;
      if (k > 0) parts.push_back(nd::slice_rows(z_neg, i * k, (i + 1) * k));
      if (cfg.batch_negatives) {
        std::vector<std::size_t> idx;
        std::size_t count = 0;
        for (std::size_t r = 0; r < 2 * p; ++r) {
          if (batch.labels[r] == batch.labels[i]) continue;
          for (std::size_t c = 0; c < n; ++c) idx.push_back(r * n + c);
          ++count;
        }
        if (count > 0) parts.push_back(nd::reshape(nd::gather(f.z, std::move(idx)), count, n));
      }
      if (parts.empty()) {
        negatives.push_back(tape.constant(Tensor(0, n)));
      } else {
        negatives.push_back(parts.size() == 1 ? parts[0] : nd::concat_rows(parts));
      }
    }
    out.info_nce = losses::info_nce(anchors, positives, negatives);
    out.triplet = losses::triplet_adaptive(f.z, batch.labels);
    out.hardest = losses::hardest_negative(f.z, batch.labels, w.varsigma);
    out.combine = losses::combined_loss(losses::contrastive_loss(out.triplet, out.hardest, w), out.info_nce, w);
    total = total + out.combine;
  }
  out.total = total;
  return out;
}

EncoderTrainResult train_encoder(std::span<const dataset::OfflineTaskDataset> train, const EncoderConfig& cfg,
                                 std::uint64_t seed, std::optional<std::filesystem::path> dump_path) {
  cfg.validate();
  if (train.empty()) throw DataError("encoder training needs at least one dataset");
  if (cfg.combine && train.size() < 2) throw ConfigError("contrastive losses need at least two training tasks");

  nd::Rng root = nd::Rng::named(seed, "encoder");
  nd::Rng init_rng = root.fork("init");
  nd::Rng batch_rng = root.fork("batch");
  nd::Rng noise_rng = root.fork("noise");

  std::vector<dataset::ContextSampler> samplers;
  std::vector<double> goals;
  for (const auto& ds : train) {
    samplers.emplace_back(ds, cfg.n_ctx);
    goals.push_back(envs::standardized_goal(ds.task()));
  }

  EncoderTrainResult res{CausalVae(cfg, FeatureScaler::fit(train), train[0].record_width(), init_rng), {}};
  CausalVae& model = res.model;
  auto params = model.trainable_parameters();
  nd::AdamState opt = nd::make_adam(params, cfg.lr);
  res.log.reserve(cfg.steps);

  // Tasks are visited through reshuffled permutations so every batch is
  // spread over as many tasks as possible.
  std::vector<std::size_t> order(train.size());
  std::iota(order.begin(), order.end(), 0);
  const std::size_t pairs = cfg.batch / 2;

  for (std::size_t step = 0; step < cfg.steps; ++step) {
    // fresh shuffle per step so a batch never repeats a task before all are used
    for (std::size_t i = order.size(); i > 1; --i) std::swap(order[i - 1], order[batch_rng.index(i)]);
    std::vector<std::size_t> tasks(pairs);
    for (std::size_t k = 0; k < pairs; ++k) tasks[k] = order[k % order.size()];
    const EncoderBatch batch = make_encoder_batch(model, samplers, goals, tasks, batch_rng);

    auto fail = [&](const std::string& what) {
      if (dump_path) dump_batch(*dump_path, batch);
      return NumericalError("encoder loss became non-finite at step " + std::to_string(step) + ": " + what);
    };
    try {
      Tape tape;
      const EncoderLossTerms terms = encoder_loss(tape, model, batch, &noise_rng);
      EncoderLossRow row{step,
                         terms.total.item(),
                         terms.neg_elbo.item(),
                         terms.dag.item(),
                         terms.task_info.item(),
                         terms.info_nce.item(),
                         terms.triplet.item(),
                         terms.hardest.item(),
                         terms.combine.item()};
      if (!std::isfinite(row.total)) throw fail("total = " + fmt(row.total));
      tape.backward(terms.total);
      nd::adam_step(params, opt);
      model.enforce_zero_diagonal();
      res.log.push_back(row);
    } catch (const NumericalError& e) {
      if (std::string_view(e.what()).starts_with("encoder loss")) throw;
      throw fail(e.what());
    }
  }
  return res;
}

void write_loss_csv(std::ostream& os, std::span<const EncoderLossRow> rows) {
  os << "step,total,neg_elbo,dag,task_info,info_nce,triplet,hardest,combine\n";
  for (const auto& r : rows) {
    os << r.step << ',' << fmt(r.total) << ',' << fmt(r.neg_elbo) << ',' << fmt(r.dag) << ',' << fmt(r.task_info)
       << ',' << fmt(r.info_nce) << ',' << fmt(r.triplet) << ',' << fmt(r.hardest) << ',' << fmt(r.combine) << '\n';
  }
}

}  // namespace comrl::encoder
