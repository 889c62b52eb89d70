#include "comrl/evalviz/embedding.hpp"

#include "comrl/errors.hpp"

#include <Eigen/Eigenvalues>

#include <cmath>
#include <cstdio>
#include <map>
#include <stdexcept>

namespace comrl::evalviz {

using nd::Tensor;

namespace {

std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

double task_param(const envs::TaskSpec& t) {
  return t.family == envs::TaskFamily::PointRandParams ? t.mass : t.goal;
}

}  // namespace

void EmbeddingDump::write_csv(std::ostream& os) const {
  os << "task_id,sample,task_param";
  for (std::size_t c = 0; c < z.cols(); ++c) os << ",z_" << c;
  os << ",pca_x,pca_y\n";
  for (std::size_t r = 0; r < size(); ++r) {
    os << task_id[r] << ',' << sample[r] << ',' << fmt(task_param[r]);
    for (double v : z.row(r)) os << ',' << fmt(v);
    os << ',' << fmt(pca(r, 0)) << ',' << fmt(pca(r, 1)) << '\n';
  }
}

EmbeddingDump export_embeddings(std::span<const dataset::OfflineTaskDataset> datasets,
                                const encoder::CausalVae& encoder, std::size_t samples_per_task, std::uint64_t seed) {
  if (samples_per_task == 0) throw ConfigError("samples_per_task must be at least 1");
  const std::size_t n = encoder.latent_dim();
  EmbeddingDump d;
  d.z = Tensor(datasets.size() * samples_per_task, n);
  std::size_t row = 0;
  for (const auto& ds : datasets) {
    nd::Rng rng = nd::Rng::named(seed, "embed").fork(static_cast<std::uint64_t>(ds.task().task_id));
    const dataset::ContextSampler sampler(ds, encoder.config().n_ctx);
    for (std::size_t k = 0; k < samples_per_task; ++k, ++row) {
      const Tensor z = encoder.represent(sampler.sample(rng), rng);
      for (std::size_t c = 0; c < n; ++c) d.z(row, c) = z[c];
      d.task_id.push_back(ds.task().task_id);
      d.sample.push_back(static_cast<int>(k));
      d.task_param.push_back(task_param(ds.task()));
    }
  }
  d.pca = pca_2d(d.z);
  return d;
}

Tensor pca_2d(const Tensor& x) {
  const std::size_t n = x.rows(), m = x.cols();
  Tensor out(n, 2);
  if (n == 0 || m == 0) return out;
  const Eigen::MatrixXd centred = x.mat().rowwise() - x.mat().colwise().mean();
  const Eigen::MatrixXd cov = centred.transpose() * centred / static_cast<double>(n);
  const Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(cov);
  // Eigenvalues come out ascending.
  for (std::size_t k = 0; k < std::min<std::size_t>(2, m); ++k) {
    Eigen::VectorXd axis = eig.eigenvectors().col(static_cast<Eigen::Index>(m - 1 - k));
    Eigen::Index big = 0;
    axis.cwiseAbs().maxCoeff(&big);
    if (axis(big) < 0) axis = -axis;
    const Eigen::VectorXd proj = centred * axis;
    for (std::size_t r = 0; r < n; ++r) out(r, k) = proj(static_cast<Eigen::Index>(r));
  }
  return out;
}

double silhouette_score(const Tensor& z, std::span<const int> labels) {
  const std::size_t n = z.rows();
  if (labels.size() != n) throw std::invalid_argument("silhouette: label count differs from point count");
  std::map<int, std::size_t> counts;
  for (int l : labels) ++counts[l];
  if (counts.size() < 2) throw std::invalid_argument("silhouette: need at least two labels");
  for (const auto& [l, c] : counts) {
    if (c < 2) throw std::invalid_argument("silhouette: label " + std::to_string(l) + " has a single point");
  }
  const Eigen::MatrixXd pts = z.mat();
  double total = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    std::map<int, double> dist_sum;
    for (std::size_t j = 0; j < n; ++j) {
      if (j == i) continue;
      dist_sum[labels[j]] += (pts.row(static_cast<Eigen::Index>(i)) - pts.row(static_cast<Eigen::Index>(j))).norm();
    }
    const double a = dist_sum[labels[i]] / static_cast<double>(counts[labels[i]] - 1);
    double b = INFINITY;
    for (const auto& [l, s] : dist_sum) {
      if (l != labels[i]) b = std::min(b, s / static_cast<double>(counts[l]));
    }
    const double denom = std::max(a, b);
    total += denom > 0.0 ? (b - a) / denom : 0.0;
  }
  return total / static_cast<double>(n);
}

double silhouette_score(const EmbeddingDump& dump) { return silhouette_score(dump.z, dump.task_id); }

}  // namespace comrl::evalviz
