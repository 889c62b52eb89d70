#pragma once

#include "comrl/envs/point_env.hpp"
#include "comrl/ndmath/rng.hpp"
#include "comrl/ndmath/tensor.hpp"

#include <filesystem>
#include <span>
#include <string>
#include <vector>

namespace comrl::dataset {

inline constexpr std::size_t kDefaultContextLength = 32;
inline constexpr std::uint32_t kDatasetVersion = 1;

struct Transition {
  std::vector<double> s;
  std::vector<double> a;
  std::vector<double> s_next;
  double r = 0.0;
  bool terminal = false;
};

/// All transitions collected for one task, stored as flat f64 records laid
/// out [s | a | s_next | r | terminal].
class OfflineTaskDataset {
 public:
  OfflineTaskDataset() = default;
  OfflineTaskDataset(envs::TaskSpec task, std::size_t state_dim = envs::kStateDim,
                     std::size_t action_dim = envs::kActionDim);

  void push_back(std::span<const double> s, std::span<const double> a, std::span<const double> s_next,
                 double r, bool terminal);
  void push_back(const Transition& t) { push_back(t.s, t.a, t.s_next, t.r, t.terminal); }
  void reserve(std::size_t n) { data_.reserve(n * record_width()); }

  const envs::TaskSpec& task() const { return task_; }
  std::size_t state_dim() const { return state_dim_; }
  std::size_t action_dim() const { return action_dim_; }
  std::size_t record_width() const { return 2 * state_dim_ + action_dim_ + 2; }
  std::size_t size() const { return record_width() == 0 ? 0 : data_.size() / record_width(); }
  bool empty() const { return data_.empty(); }

  std::span<const double> record(std::size_t i) const {
    return std::span<const double>(data_).subspan(i * record_width(), record_width());
  }
  Transition at(std::size_t i) const;
  double reward(std::size_t i) const { return record(i)[2 * state_dim_ + action_dim_]; }
  bool terminal(std::size_t i) const { return record(i)[2 * state_dim_ + action_dim_ + 1] != 0.0; }
  std::span<const double> raw() const { return data_; }
  std::vector<double>& mutable_raw() { return data_; }

  bool operator==(const OfflineTaskDataset&) const = default;

 private:
  envs::TaskSpec task_;
  std::size_t state_dim_ = envs::kStateDim;
  std::size_t action_dim_ = envs::kActionDim;
  std::vector<double> data_;
};

/// n_ctx consecutive records of one task as an n_ctx x record_width matrix.
struct TaskContext {
  int task_id = 0;
  std::size_t start = 0;
  nd::Tensor data;

  std::size_t length() const { return data.rows(); }
};

/// Precomputes the window starts that stay inside one episode: a window may
/// hold a terminal flag only in its last row.
class ContextSampler {
 public:
  ContextSampler(const OfflineTaskDataset& ds, std::size_t n_ctx = kDefaultContextLength);

  TaskContext sample(nd::Rng& rng) const;
  TaskContext at(std::size_t start) const;
  const std::vector<std::size_t>& valid_starts() const { return starts_; }
  const OfflineTaskDataset& dataset() const { return *ds_; }
  std::size_t context_length() const { return n_ctx_; }

 private:
  const OfflineTaskDataset* ds_;
  std::size_t n_ctx_;
  std::vector<std::size_t> starts_;
};

TaskContext sample_context(const OfflineTaskDataset& ds, nd::Rng& rng,
                           std::size_t n_ctx = kDefaultContextLength);

std::string task_filename(int task_id);
std::string task_to_json(const envs::TaskSpec& task);
envs::TaskSpec task_from_json(const std::string& json);

void write_dataset(const OfflineTaskDataset& ds, const std::filesystem::path& path);
/// Throws nd::FormatError with a code per failure kind.
OfflineTaskDataset read_dataset(const std::filesystem::path& path);

}  // namespace comrl::dataset
