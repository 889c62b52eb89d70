#include "comrl/ndmath/finite_diff.hpp"

#include "comrl/errors.hpp"

#include <algorithm>
#include <cmath>

namespace comrl::nd {

Tensor finite_diff_grad(const std::function<double(const Tensor&)>& f, const Tensor& x, double h) {
  if (!(h > 0.0)) throw std::invalid_argument("finite_diff_grad: h must be positive");
  Tensor g(x.rows(), x.cols());
  Tensor probe = x;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double orig = probe[i];
    probe[i] = orig + h;
    const double fp = f(probe);
    probe[i] = orig - h;
    const double fm = f(probe);
    probe[i] = orig;
    g[i] = (fp - fm) / (2.0 * h);
  }
  return g;
}

double relative_error(const Tensor& a, const Tensor& b, double floor) {
  if (!a.same_shape(b)) throw ShapeError("relative_error: " + a.shape_str() + " vs " + b.shape_str());
  const double diff = (a.mat() - b.mat()).norm();
  const double scale = std::max({a.mat().norm(), b.mat().norm(), floor});
  return diff / scale;
}

}  // namespace comrl::nd
