#pragma once

#include "comrl/ndmath/tensor.hpp"

#include <functional>

namespace comrl::nd {

/// Central differences (f(x+h e_i) - f(x-h e_i)) / 2h for every coordinate.
Tensor finite_diff_grad(const std::function<double(const Tensor&)>& f, const Tensor& x, double h = 1e-5);

/// ||a - b|| / max(||a||, ||b||, floor); the measure used by gradient checks.
double relative_error(const Tensor& a, const Tensor& b, double floor = 1e-8);

}  // namespace comrl::nd
