#pragma once

#include "comrl/ndmath/tensor.hpp"

#include <cstddef>
#include <vector>

namespace comrl::nd {

/// LU decomposition with partial pivoting, PA = LU.
class LuFactorization {
 public:
  /// Throws SingularMatrixError when a pivot falls below n * eps * max|M|.
  explicit LuFactorization(const Tensor& m);

  /// Solves M X = B for an n x k right-hand side.
  Tensor solve(const Tensor& b) const;
  /// Solves M^T X = B.
  Tensor solve_transposed(const Tensor& b) const;

  std::size_t dim() const { return n_; }
  double min_abs_pivot() const { return min_pivot_; }

 private:
  std::size_t n_;
  Tensor lu_;
  std::vector<std::size_t> perm_;
  double min_pivot_;
};

/// x with M x = b, b given as n x k columns.
Tensor solve_linear(const Tensor& m, const Tensor& b);

}  // namespace comrl::nd
