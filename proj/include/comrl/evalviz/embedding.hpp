#pragma once

#include "comrl/dataset/dataset.hpp"
#include "comrl/encoder/causal_vae.hpp"

#include <cstdint>
#include <ostream>
#include <span>
#include <vector>

namespace comrl::evalviz {

struct EmbeddingDump {
  std::vector<int> task_id;
  std::vector<int> sample;
  std::vector<double> task_param;  // goal, or mass for PointRandParams
  nd::Tensor z;                    // N x n
  nd::Tensor pca;                  // N x 2

  std::size_t size() const { return task_id.size(); }
  /// task_id, sample, task_param, z_0..z_{n-1}, pca_x, pca_y
  void write_csv(std::ostream& os) const;
};

EmbeddingDump export_embeddings(std::span<const dataset::OfflineTaskDataset> datasets,
                                const encoder::CausalVae& encoder, std::size_t samples_per_task, std::uint64_t seed);

/// Projection of the centred rows of x onto its two leading principal axes.
/// Each axis is signed so that its largest-magnitude loading is positive.
nd::Tensor pca_2d(const nd::Tensor& x);

/// Mean silhouette with Euclidean distance. Throws std::invalid_argument
/// unless there are at least two labels with at least two points each.
/// Points whose a and b are both zero score 0.
double silhouette_score(const nd::Tensor& z, std::span<const int> labels);
double silhouette_score(const EmbeddingDump& dump);

}  // namespace comrl::evalviz
