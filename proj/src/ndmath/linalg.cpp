#include "comrl/ndmath/linalg.hpp"

#include "comrl/errors.hpp"

#include <cmath>
#include <limits>
#include <utility>

namespace comrl::nd {

LuFactorization::LuFactorization(const Tensor& m) : n_(m.rows()), lu_(m), perm_(m.rows()) {
  if (m.rows() != m.cols()) throw ShapeError("LU of non-square matrix " + m.shape_str());
  double max_abs = 0.0;
  for (double v : m.values()) max_abs = std::max(max_abs, std::abs(v));
  const double tol = static_cast<double>(n_) * std::numeric_limits<double>::epsilon() * max_abs;

  for (std::size_t i = 0; i < n_; ++i) perm_[i] = i;
  min_pivot_ = std::numeric_limits<double>::infinity();

  for (std::size_t k = 0; k < n_; ++k) {
    std::size_t p = k;
    double best = std::abs(lu_(k, k));
    for (std::size_t r = k + 1; r < n_; ++r) {
      if (std::abs(lu_(r, k)) > best) {
        best = std::abs(lu_(r, k));
        p = r;
      }
    }
    min_pivot_ = std::min(min_pivot_, best);
    if (best <= tol || best == 0.0) {
      throw SingularMatrixError("singular matrix in LU: pivot " + std::to_string(best) +
                                    " at column " + std::to_string(k),
                                best);
    }
    if (p != k) {
      for (std::size_t c = 0; c < n_; ++c) std::swap(lu_(k, c), lu_(p, c));
      std::swap(perm_[k], perm_[p]);
    }
    const double pivot = lu_(k, k);
    for (std::size_t r = k + 1; r < n_; ++r) {
      const double f = lu_(r, k) / pivot;
      lu_(r, k) = f;
      if (f == 0.0) continue;
      for (std::size_t c = k + 1; c < n_; ++c) lu_(r, c) -= f * lu_(k, c);
    }
  }
}

Tensor LuFactorization::solve(const Tensor& b) const {
  if (b.rows() != n_) throw ShapeError("LU solve: rhs " + b.shape_str() + " for n=" + std::to_string(n_));
  const std::size_t k = b.cols();
  Tensor x(n_, k);
  for (std::size_t i = 0; i < n_; ++i)
    for (std::size_t c = 0; c < k; ++c) x(i, c) = b(perm_[i], c);
  // L y = Pb (unit diagonal)
  for (std::size_t i = 0; i < n_; ++i)
    for (std::size_t j = 0; j < i; ++j) {
      const double l = lu_(i, j);
      if (l == 0.0) continue;
      for (std::size_t c = 0; c < k; ++c) x(i, c) -= l * x(j, c);
    }
  // U x = y
  for (std::size_t ii = n_; ii-- > 0;) {
    for (std::size_t j = ii + 1; j < n_; ++j) {
      const double u = lu_(ii, j);
      if (u == 0.0) continue;
      for (std::size_t c = 0; c < k; ++c) x(ii, c) -= u * x(j, c);
    }
    for (std::size_t c = 0; c < k; ++c) x(ii, c) /= lu_(ii, ii);
  }
  return x;
}

Tensor LuFactorization::solve_transposed(const Tensor& b) const {
  if (b.rows() != n_) throw ShapeError("LU solve^T: rhs " + b.shape_str() + " for n=" + std::to_string(n_));
  const std::size_t k = b.cols();
  // M^T = U^T L^T P, so solve U^T y = b, L^T w = y, x = P^T w.
  Tensor y = b;
  for (std::size_t i = 0; i < n_; ++i) {
    for (std::size_t j = 0; j < i; ++j) {
      const double u = lu_(j, i);
      if (u == 0.0) continue;
      for (std::size_t c = 0; c < k; ++c) y(i, c) -= u * y(j, c);
    }
    for (std::size_t c = 0; c < k; ++c) y(i, c) /= lu_(i, i);
  }
  for (std::size_t ii = n_; ii-- > 0;) {
    for (std::size_t j = ii + 1; j < n_; ++j) {
      const double l = lu_(j, ii);
      if (l == 0.0) continue;
      for (std::size_t c = 0; c < k; ++c) y(ii, c) -= l * y(j, c);
    }
  }
  Tensor x(n_, k);
  for (std::size_t i = 0; i < n_; ++i)
    for (std::size_t c = 0; c < k; ++c) x(perm_[i], c) = y(i, c);
  return x;
}

Tensor solve_linear(const Tensor& m, const Tensor& b) { return LuFactorization(m).solve(b); }

}  // namespace comrl::nd
