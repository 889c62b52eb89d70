#include "comrl/encoder/causal_vae.hpp"

#include "comrl/errors.hpp"
#include "comrl/ndmath/binary_io.hpp"
#include "comrl/ndmath/linalg.hpp"

#include "json.hpp"

#include <cmath>

namespace comrl::encoder {

using nd::Tape;
using nd::Tensor;
using nd::Var;

namespace {

constexpr std::uint32_t kEncoderVersion = 1;
constexpr double kLogSigmaMin = -10.0;
constexpr double kLogSigmaMax = 3.0;
constexpr double kPriorSigmaFloor = 1e-3;
constexpr std::size_t kLambdaHidden = 16;

double softplus(double x) { return std::max(x, 0.0) + std::log1p(std::exp(-std::abs(x))); }

}  // namespace

void EncoderConfig::validate() const {
  if (latent_dim == 0 || latent_dim % 4 != 0) throw ConfigError("encoder latent_dim must be a positive multiple of 4");
  if (hidden == 0 || n_ctx == 0 || steps == 0) throw ConfigError("encoder sizes must be positive");
  if (batch < 4 || batch % 2 != 0) throw ConfigError("encoder batch must be even and at least 4");
  if (!(lr > 0.0) || !std::isfinite(lr)) throw ConfigError("encoder lr must be positive");
  if (neg_count == 0) throw ConfigError("encoder neg_count must be positive");
  weights.validate();
}

// ---------------------------------------------------------------- scaler

FeatureScaler FeatureScaler::fit(std::span<const dataset::OfflineTaskDataset> datasets) {
  if (datasets.empty()) throw DataError("cannot fit feature scaler without datasets");
  const std::size_t w = datasets[0].record_width();
  std::vector<double> sum(w, 0.0), sq(w, 0.0);
  double count = 0.0;
  for (const auto& ds : datasets) {
    if (ds.record_width() != w) throw DataError("datasets disagree on record width");
    for (std::size_t i = 0; i < ds.size(); ++i) {
      const auto rec = ds.record(i);
      for (std::size_t c = 0; c < w; ++c) {
        sum[c] += rec[c];
        sq[c] += rec[c] * rec[c];
      }
    }
    count += static_cast<double>(ds.size());
  }
  FeatureScaler s{Tensor(1, w), Tensor(1, w)};
  for (std::size_t c = 0; c < w; ++c) {
    const double m = sum[c] / count;
    const double var = std::max(sq[c] / count - m * m, 0.0);
    s.mean[c] = m;
    s.std[c] = std::sqrt(var) > 1e-8 ? std::sqrt(var) : 1.0;
  }
  return s;
}

FeatureScaler FeatureScaler::identity(std::size_t width) { return {Tensor(1, width, 0.0), Tensor(1, width, 1.0)}; }

dataset::TaskContext FeatureScaler::apply(const dataset::TaskContext& ctx) const {
  if (ctx.data.cols() != mean.cols()) throw ShapeError("FeatureScaler: context width");
  dataset::TaskContext out = ctx;
  for (std::size_t r = 0; r < out.data.rows(); ++r)
    for (std::size_t c = 0; c < out.data.cols(); ++c) out.data(r, c) = (out.data(r, c) - mean[c]) / std[c];
  return out;
}

// ---------------------------------------------------------------- task info

Tensor replicate_info(const std::array<double, 4>& u4, std::size_t latent_dim) {
  Tensor u(1, latent_dim);
  for (std::size_t i = 0; i < latent_dim; ++i) u[i] = u4[(4 * i) / latent_dim];
  return u;
}

TaskInfo build_task_info(const dataset::TaskContext& ctx, std::optional<double> goal, nd::Rng& rng,
                         std::size_t latent_dim, std::size_t state_dim, std::size_t action_dim) {
  const std::size_t w = 2 * state_dim + action_dim + 2;
  if (ctx.data.cols() != w) throw ShapeError("build_task_info: context width");
  auto draw = [&](auto&& in_group) {
    double s = 0.0, sq = 0.0, n = 0.0;
    for (std::size_t r = 0; r < ctx.data.rows(); ++r)
      for (std::size_t c = 0; c < w; ++c)
        if (in_group(c)) {
          const double v = ctx.data(r, c);
          s += v;
          sq += v * v;
          n += 1.0;
        }
    const double m = s / n;
    const double sd = std::max(std::sqrt(std::max(sq / n - m * m, 0.0)), kInfoSigmaFloor);
    return rng.normal(m, sd);
  };
  TaskInfo info;
  info.u4[0] = goal.value_or(0.0);
  info.u4[1] = draw([&](std::size_t c) { return c < state_dim || (c >= state_dim + action_dim && c < 2 * state_dim + action_dim); });
  info.u4[2] = draw([&](std::size_t c) { return c >= state_dim && c < state_dim + action_dim; });
  info.u4[3] = draw([&](std::size_t c) { return c == 2 * state_dim + action_dim; });
  info.u_n = replicate_info(info.u4, latent_dim);
  return info;
}

// ---------------------------------------------------------------- model

CausalVae::CausalVae(EncoderConfig cfg, FeatureScaler scaler, std::size_t record_width, nd::Rng& rng)
    : cfg_(std::move(cfg)), scaler_(std::move(scaler)), record_width_(record_width) {
  cfg_.validate();
  const std::size_t n = cfg_.latent_dim;
  const std::vector<std::size_t> hidden(cfg_.depth, cfg_.hidden);
  enc_ = nd::Mlp("E", {input_dim() + n, hidden, 2 * n, nd::Activation::ReLU}, rng);
  dec_ = nd::Mlp("D", {n, hidden, input_dim(), nd::Activation::ReLU}, rng);
  lambda_ = nd::Mlp("lambda", {1, {kLambdaHidden}, 2, nd::Activation::Tanh}, rng);
  prior_bias_ = nd::Parameter("prior_bias", Tensor(1, 2 * n, 0.0));
  a_ = nd::Parameter("A", Tensor(n, n, 0.0));
  off_diagonal_ = Tensor(n, n, 1.0);
  for (std::size_t i = 0; i < n; ++i) off_diagonal_(i, i) = 0.0;
}

Var CausalVae::adjacency(Tape& tape) {
  if (!cfg_.causal) return tape.constant(adjacency_value());
  return tape.param(a_) * tape.constant(off_diagonal_);
}

CausalVae::Forward CausalVae::encode(Tape& tape, Var tau, Var u_n, nd::Rng* rng) {
  const std::size_t n = cfg_.latent_dim;
  std::vector<Var> parts{tau, u_n};
  const Var out = enc_.forward(tape, nd::concat_cols(parts));
  Forward f;
  f.eps_mu = nd::slice_cols(out, 0, n);
  f.eps_sigma = nd::exp(nd::clamp(nd::slice_cols(out, n, 2 * n), kLogSigmaMin, kLogSigmaMax));
  f.eps = rng != nullptr ? nd::gaussian_sample(f.eps_mu, f.eps_sigma, *rng) : f.eps_mu;
  f.adjacency = adjacency(tape);
  f.causal_matrix = tape.constant(Tensor::identity(n)) - nd::transpose(f.adjacency);
  f.z = nd::transpose(nd::solve(f.causal_matrix, nd::transpose(f.eps)));
  return f;
}

Var CausalVae::decode(Tape& tape, Var z) { return dec_.forward(tape, z); }

std::pair<Var, Var> CausalVae::prior(Tape& tape, Var u_n) {
  const std::size_t b = u_n.rows(), n = cfg_.latent_dim;
  if (!cfg_.causal) {
    return {tape.constant(Tensor(b, n, 0.0)), tape.constant(Tensor(b, n, 1.0))};
  }
  const Var per_dim = lambda_.forward(tape, nd::reshape(u_n, b * n, 1));  // (b*n) x 2
  const Var bias = tape.param(prior_bias_);
  const Var mu = nd::add_rowvec(nd::reshape(nd::slice_cols(per_dim, 0, 1), b, n), nd::slice_cols(bias, 0, n));
  const Var raw = nd::add_rowvec(nd::reshape(nd::slice_cols(per_dim, 1, 2), b, n), nd::slice_cols(bias, n, 2 * n));
  return {mu, nd::softplus(raw) + kPriorSigmaFloor};
}

// ---------------------------------------------------------------- tape-free

Tensor CausalVae::flatten(const dataset::TaskContext& raw_ctx) const {
  if (raw_ctx.data.rows() != cfg_.n_ctx || raw_ctx.data.cols() != record_width_) {
    throw ShapeError("context is " + raw_ctx.data.shape_str() + ", encoder expects " + std::to_string(cfg_.n_ctx) +
                     "x" + std::to_string(record_width_));
  }
  return scaler_.apply(raw_ctx).data.reshaped(1, input_dim());
}

TaskInfo CausalVae::task_info(const dataset::TaskContext& raw_ctx, std::optional<double> goal, nd::Rng& rng) const {
  return build_task_info(scaler_.apply(raw_ctx), goal, rng, cfg_.latent_dim);
}

Tensor CausalVae::encoder_out(const dataset::TaskContext& ctx, const TaskInfo& info) const {
  if (info.u_n.cols() != cfg_.latent_dim) throw ShapeError("task info has wrong latent width");
  const Tensor tau = flatten(ctx);
  Tensor in(1, input_dim() + cfg_.latent_dim);
  for (std::size_t i = 0; i < input_dim(); ++i) in[i] = tau[i];
  for (std::size_t i = 0; i < cfg_.latent_dim; ++i) in[input_dim() + i] = info.u_n[i];
  return enc_.forward_value(in);
}

Tensor CausalVae::apply_causal_layer(const Tensor& eps) const {
  const std::size_t n = cfg_.latent_dim;
  Tensor m = Tensor::identity(n);
  const Tensor a = adjacency_value();
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j) m(i, j) -= a(j, i);
  const Tensor z = nd::solve_linear(m, eps.reshaped(n, 1));
  return z.reshaped(1, n);
}

CausalLatent CausalVae::encode(const dataset::TaskContext& ctx, const TaskInfo& info, nd::Rng& rng) const {
  const std::size_t n = cfg_.latent_dim;
  const Tensor out = encoder_out(ctx, info);
  CausalLatent lat{Tensor(1, n), Tensor(1, n), Tensor(1, n), Tensor()};
  for (std::size_t i = 0; i < n; ++i) {
    lat.eps_mu[i] = out[i];
    lat.eps_sigma[i] = std::exp(std::clamp(out[n + i], kLogSigmaMin, kLogSigmaMax));
    lat.eps[i] = lat.eps_mu[i] + lat.eps_sigma[i] * rng.normal();
  }
  lat.z = apply_causal_layer(lat.eps);
  return lat;
}

Tensor CausalVae::encode_mean(const dataset::TaskContext& ctx, const TaskInfo& info) const {
  const Tensor out = encoder_out(ctx, info);
  Tensor eps(1, cfg_.latent_dim);
  for (std::size_t i = 0; i < cfg_.latent_dim; ++i) eps[i] = out[i];
  return apply_causal_layer(eps);
}

Tensor CausalVae::decode(const Tensor& z) const { return dec_.forward_value(z); }

std::pair<Tensor, Tensor> CausalVae::prior_params(const TaskInfo& info) const {
  const std::size_t n = cfg_.latent_dim;
  if (!cfg_.causal) return {Tensor(1, n, 0.0), Tensor(1, n, 1.0)};
  const Tensor per_dim = lambda_.forward_value(info.u_n.reshaped(n, 1));
  Tensor mu(1, n), sigma(1, n);
  for (std::size_t i = 0; i < n; ++i) {
    mu[i] = per_dim(i, 0) + prior_bias_.value[i];
    sigma[i] = softplus(per_dim(i, 1) + prior_bias_.value[n + i]) + kPriorSigmaFloor;
  }
  return {mu, sigma};
}

Tensor CausalVae::represent(const dataset::TaskContext& ctx, nd::Rng& rng) const {
  return encode_mean(ctx, task_info(ctx, std::nullopt, rng));
}

Tensor CausalVae::adjacency_value() const {
  Tensor a = a_.value;
  for (std::size_t i = 0; i < a.rows(); ++i) a(i, i) = 0.0;
  return a;
}

void CausalVae::set_adjacency(const Tensor& a) {
  if (!a.same_shape(a_.value)) throw ShapeError("set_adjacency: shape");
  a_.value = a;
  enforce_zero_diagonal();
}

void CausalVae::enforce_zero_diagonal() {
  for (std::size_t i = 0; i < a_.value.rows(); ++i) a_.value(i, i) = 0.0;
}

std::vector<nd::Parameter*> CausalVae::trainable_parameters() {
  auto out = enc_.parameters();
  for (auto* p : dec_.parameters()) out.push_back(p);
  if (cfg_.causal) {
    for (auto* p : lambda_.parameters()) out.push_back(p);
    out.push_back(&prior_bias_);
    out.push_back(&a_);
  }
  return out;
}

std::vector<nd::Parameter*> CausalVae::all_parameters() {
  auto out = enc_.parameters();
  for (auto* p : dec_.parameters()) out.push_back(p);
  for (auto* p : lambda_.parameters()) out.push_back(p);
  out.push_back(&prior_bias_);
  out.push_back(&a_);
  return out;
}

std::vector<const nd::Parameter*> CausalVae::all_parameters() const {
  auto out = enc_.parameters();
  for (auto* p : dec_.parameters()) out.push_back(p);
  for (auto* p : lambda_.parameters()) out.push_back(p);
  out.push_back(&prior_bias_);
  out.push_back(&a_);
  return out;
}

// ---------------------------------------------------------------- persistence

std::string config_to_json(const EncoderConfig& cfg) {
  nlohmann::json j;
  j["latent_dim"] = cfg.latent_dim;
  j["hidden"] = cfg.hidden;
  j["depth"] = cfg.depth;
  j["n_ctx"] = cfg.n_ctx;
  j["batch"] = cfg.batch;
  j["steps"] = cfg.steps;
  j["lr"] = cfg.lr;
  j["causal"] = cfg.causal;
  j["combine"] = cfg.combine;
  j["neg_count"] = cfg.neg_count;
  j["batch_negatives"] = cfg.batch_negatives;
  const auto& w = cfg.weights;
  j["weights"] = {{"alpha", w.alpha}, {"beta", w.beta},   {"delta", w.delta},       {"kappa", w.kappa},
                  {"nu", w.nu},       {"c_dag", w.c_dag}, {"sigma_noise", w.sigma_noise}, {"varsigma", w.varsigma}};
  return j.dump();
}

EncoderConfig config_from_json(const std::string& text) {
  try {
    const auto j = nlohmann::json::parse(text);
    EncoderConfig c;
    c.latent_dim = j.at("latent_dim").get<std::size_t>();
    c.hidden = j.at("hidden").get<std::size_t>();
    c.depth = j.at("depth").get<std::size_t>();
    c.n_ctx = j.at("n_ctx").get<std::size_t>();
    c.batch = j.at("batch").get<std::size_t>();
    c.steps = j.at("steps").get<std::size_t>();
    c.lr = j.at("lr").get<double>();
    c.causal = j.at("causal").get<bool>();
    c.combine = j.at("combine").get<bool>();
    c.neg_count = j.at("neg_count").get<std::size_t>();
    c.batch_negatives = j.at("batch_negatives").get<bool>();
    const auto& w = j.at("weights");
    c.weights.alpha = w.at("alpha").get<double>();
    c.weights.beta = w.at("beta").get<double>();
    c.weights.delta = w.at("delta").get<double>();
    c.weights.kappa = w.at("kappa").get<double>();
    c.weights.nu = w.at("nu").get<double>();
    c.weights.c_dag = w.at("c_dag").get<double>();
    c.weights.sigma_noise = w.at("sigma_noise").get<double>();
    c.weights.varsigma = w.at("varsigma").get<double>();
    return c;
  } catch (const nlohmann::json::exception& e) {
    throw nd::FormatError(nd::FormatErrc::bad_metadata, e.what());
  }
}

void CausalVae::save(const std::filesystem::path& path) const {
  nlohmann::json meta = nlohmann::json::parse(config_to_json(cfg_));
  meta["record_width"] = record_width_;
  nd::Checkpoint ckpt;
  ckpt.config_json = meta.dump();
  ckpt.tensors.push_back(scaler_.mean);
  ckpt.tensors.push_back(scaler_.std);
  for (const nd::Parameter* p : all_parameters()) ckpt.tensors.push_back(p->value);
  nd::write_checkpoint(path, "CENC", kEncoderVersion, ckpt);
}

CausalVae CausalVae::load(const std::filesystem::path& path) {
  const nd::Checkpoint ckpt = nd::read_checkpoint(path, "CENC", kEncoderVersion);
  std::size_t width = 0;
  try {
    width = nlohmann::json::parse(ckpt.config_json).at("record_width").get<std::size_t>();
  } catch (const nlohmann::json::exception& e) {
    throw nd::FormatError(nd::FormatErrc::bad_metadata, e.what());
  }
  const EncoderConfig cfg = config_from_json(ckpt.config_json);
  nd::Rng scratch(0);
  if (ckpt.tensors.size() < 2) throw nd::FormatError(nd::FormatErrc::dim_mismatch, "missing scaler");
  CausalVae vae(cfg, FeatureScaler{ckpt.tensors[0], ckpt.tensors[1]}, width, scratch);
  auto params = vae.all_parameters();
  if (ckpt.tensors.size() != params.size() + 2) {
    throw nd::FormatError(nd::FormatErrc::dim_mismatch, "encoder checkpoint holds " +
                                                            std::to_string(ckpt.tensors.size()) + " tensors");
  }
  for (std::size_t k = 0; k < params.size(); ++k) {
    if (!ckpt.tensors[k + 2].same_shape(params[k]->value)) {
      throw nd::FormatError(nd::FormatErrc::dim_mismatch, "tensor '" + params[k]->name + "' shape");
    }
    params[k]->value = ckpt.tensors[k + 2];
    params[k]->zero_grad();
  }
  return vae;
}

}  // namespace comrl::encoder
