#include "comrl/dataset/dataset.hpp"

#include "comrl/errors.hpp"

namespace comrl::dataset {

OfflineTaskDataset::OfflineTaskDataset(envs::TaskSpec task, std::size_t state_dim, std::size_t action_dim)
    : task_(task), state_dim_(state_dim), action_dim_(action_dim) {}

void OfflineTaskDataset::push_back(std::span<const double> s, std::span<const double> a,
                                   std::span<const double> s_next, double r, bool terminal) {
  if (s.size() != state_dim_ || s_next.size() != state_dim_ || a.size() != action_dim_) {
    throw ShapeError("transition dims do not match dataset");
  }
  data_.insert(data_.end(), s.begin(), s.end());
  data_.insert(data_.end(), a.begin(), a.end());
  data_.insert(data_.end(), s_next.begin(), s_next.end());
  data_.push_back(r);
  data_.push_back(terminal ? 1.0 : 0.0);
}

Transition OfflineTaskDataset::at(std::size_t i) const {
  const auto rec = record(i);
  Transition t;
  t.s.assign(rec.begin(), rec.begin() + static_cast<std::ptrdiff_t>(state_dim_));
  t.a.assign(rec.begin() + static_cast<std::ptrdiff_t>(state_dim_),
             rec.begin() + static_cast<std::ptrdiff_t>(state_dim_ + action_dim_));
  t.s_next.assign(rec.begin() + static_cast<std::ptrdiff_t>(state_dim_ + action_dim_),
                  rec.begin() + static_cast<std::ptrdiff_t>(2 * state_dim_ + action_dim_));
  t.r = reward(i);
  t.terminal = terminal(i);
  return t;
}

ContextSampler::ContextSampler(const OfflineTaskDataset& ds, std::size_t n_ctx) : ds_(&ds), n_ctx_(n_ctx) {
  if (n_ctx == 0) throw std::invalid_argument("context length must be positive");
  if (ds.size() < n_ctx) {
    throw DataError("dataset for task " + std::to_string(ds.task().task_id) + " has " +
                    std::to_string(ds.size()) + " transitions, context needs " + std::to_string(n_ctx));
  }
  // terminals in rows [j, j + n_ctx - 1) disqualify start j
  std::vector<std::size_t> term_before(ds.size() + 1, 0);
  for (std::size_t i = 0; i < ds.size(); ++i) {
    term_before[i + 1] = term_before[i] + (ds.terminal(i) ? 1 : 0);
  }
  for (std::size_t j = 0; j + n_ctx <= ds.size(); ++j) {
    if (term_before[j + n_ctx - 1] - term_before[j] == 0) starts_.push_back(j);
  }
  if (starts_.empty()) {
    throw DataError("no episode in task " + std::to_string(ds.task().task_id) + " is long enough for a context");
  }
}

TaskContext ContextSampler::at(std::size_t start) const {
  TaskContext ctx;
  ctx.task_id = ds_->task().task_id;
  ctx.start = start;
  const std::size_t w = ds_->record_width();
  std::vector<double> vals(ds_->raw().begin() + static_cast<std::ptrdiff_t>(start * w),
                           ds_->raw().begin() + static_cast<std::ptrdiff_t>((start + n_ctx_) * w));
  ctx.data = nd::Tensor(n_ctx_, w, std::move(vals));
  return ctx;
}

TaskContext ContextSampler::sample(nd::Rng& rng) const { return at(starts_[rng.index(starts_.size())]); }

TaskContext sample_context(const OfflineTaskDataset& ds, nd::Rng& rng, std::size_t n_ctx) {
  return ContextSampler(ds, n_ctx).sample(rng);
}

std::string task_filename(int task_id) { return "task_" + std::to_string(task_id) + ".comr"; }

}  // namespace comrl::dataset
