#pragma once

#include "comrl/ndmath/autodiff.hpp"

#include <cstdint>
#include <span>
#include <vector>

namespace comrl::nd {

struct AdamState {
  std::uint64_t step_count = 0;
  std::vector<Tensor> first_moment;
  std::vector<Tensor> second_moment;
  double lr = 3e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps_adam = 1e-8;
};

AdamState make_adam(std::span<Parameter* const> params, double lr);

/// One Adam update of params from their .grad buffers. Moments are
/// allocated lazily (zero-initialised) on the first call.
void adam_step(std::span<Parameter* const> params, AdamState& state);

}  // namespace comrl::nd
