#pragma once

#include "comrl/ndmath/rng.hpp"
#include "comrl/ndmath/tensor.hpp"

#include <cstddef>
#include <functional>
#include <initializer_list>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace comrl::nd {

/// A trainable tensor and its gradient buffer. Gradients are written by
/// Tape::backward for every parameter that was placed on the tape.
struct Parameter {
  std::string name;
  Tensor value;
  Tensor grad;

  Parameter() = default;
  Parameter(std::string n, Tensor v) : name(std::move(n)), value(std::move(v)), grad(value.rows(), value.cols()) {}

  void zero_grad() { grad = Tensor(value.rows(), value.cols()); }
};

class Tape;

/// Handle to a node on a Tape. Cheap to copy; only valid while its tape lives.
class Var {
 public:
  Var() = default;

  const Tensor& value() const;
  bool requires_grad() const;
  std::size_t rows() const { return value().rows(); }
  std::size_t cols() const { return value().cols(); }
  double item() const { return value().item(); }

  Tape* tape() const { return tape_; }
  std::size_t id() const { return id_; }
  bool valid() const { return tape_ != nullptr; }

 private:
  friend class Tape;
  Var(Tape* tape, std::size_t id) : tape_(tape), id_(id) {}

  Tape* tape_ = nullptr;
  std::size_t id_ = 0;
};

/// Reverse-mode tape. Nodes are appended in evaluation order, so walking
/// the node list backwards is a valid reverse topological order.
class Tape {
 public:
  using BackwardFn = std::function<void(Tape&, std::size_t)>;

  Tape() { nodes_.reserve(512); }
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  Var constant(Tensor value);
  /// Free leaf whose gradient is read back with grad().
  Var variable(Tensor value);
  /// Leaf bound to a Parameter; backward() overwrites p.grad.
  Var param(Parameter& p);

  /// Runs the backward pass from a 1x1 loss. Every Parameter on the tape has
  /// its grad reset first, so parameters the loss does not reach end up zero.
  void backward(Var loss);

  /// Gradient of the last backward pass w.r.t. v (zeros if unreached).
  Tensor grad(Var v) const;

  // -- interface for primitive implementations --
  Var record(std::string_view op, Tensor value, std::initializer_list<Var> inputs, BackwardFn fn);
  Var record(std::string_view op, Tensor value, std::span<const Var> inputs, BackwardFn fn);
  const Tensor& value(std::size_t id) const { return nodes_[id].value; }
  const Tensor& out_grad(std::size_t id) const { return nodes_[id].grad; }
  bool needs_grad(std::size_t id) const { return nodes_[id].requires_grad; }
  /// Gradient buffer of node id, allocated as zeros on first use.
  Tensor& grad_buffer(std::size_t id);

  std::size_t size() const { return nodes_.size(); }

 private:
  friend class Var;
  struct Node {
    Tensor value;
    Tensor grad;
    bool requires_grad = false;
    BackwardFn backward;
    Parameter* param = nullptr;
  };
  std::vector<Node> nodes_;
};

// -- primitives --
// All binary elementwise ops require identical shapes; the *_rowvec and
// *_colvec variants broadcast a 1 x m row or a B x 1 column.

Var add(Var a, Var b);
Var sub(Var a, Var b);
Var mul(Var a, Var b);
Var div(Var a, Var b);
Var add_rowvec(Var x, Var row);
Var mul_rowvec(Var x, Var row);
Var div_colvec(Var x, Var col);
Var add_scalar(Var x, double c);
Var scale(Var x, double c);
/// c / x elementwise.
Var rdiv(double c, Var x);
Var neg(Var x);

Var matmul(Var a, Var b);
Var transpose(Var x);

Var square(Var x);
Var sqrt(Var x);
Var exp(Var x);
Var log(Var x);
Var tanh(Var x);
Var sigmoid(Var x);
Var softplus(Var x);
Var relu(Var x);
/// Gradient passes only inside [lo, hi].
Var clamp(Var x, double lo, double hi);
Var minimum(Var a, Var b);

Var sum(Var x);
Var mean(Var x);
/// Row sums, B x m -> B x 1.
Var sum_cols(Var x);
/// Column means, B x m -> 1 x m.
Var mean_rows(Var x);
Var trace(Var x);
Var max_all(Var x);
/// Row-wise log-sum-exp, B x m -> B x 1.
Var logsumexp_rows(Var x);

Var slice_cols(Var x, std::size_t begin, std::size_t end);
Var slice_rows(Var x, std::size_t begin, std::size_t end);
Var concat_cols(std::span<const Var> parts);
Var concat_rows(std::span<const Var> parts);
Var reshape(Var x, std::size_t rows, std::size_t cols);
/// Picks flat (row-major) entries of x into a 1 x idx.size() row.
Var gather(Var x, std::vector<std::size_t> idx);
/// Row i repeated `times` times consecutively: (B x m) -> (B*times x m).
Var repeat_rows(Var x, std::size_t times);

/// Squared Euclidean distances between all row pairs, B x n -> B x B.
Var pairwise_sqdist(Var z);

/// X solving M X = B for square M, via LU with partial pivoting. The
/// backward pass reuses the factorisation for the adjoint solve.
Var solve(Var m, Var b);

/// mu + sigma * eta with eta ~ N(0, 1) drawn once from rng. eta enters the
/// tape as a constant, so gradients reach mu and sigma only.
Var gaussian_sample(Var mu, Var sigma, Rng& rng);

inline Var operator+(Var a, Var b) { return add(a, b); }
inline Var operator-(Var a, Var b) { return sub(a, b); }
inline Var operator*(Var a, Var b) { return mul(a, b); }
inline Var operator/(Var a, Var b) { return div(a, b); }
inline Var operator-(Var a) { return neg(a); }
inline Var operator*(double c, Var a) { return scale(a, c); }
inline Var operator*(Var a, double c) { return scale(a, c); }
inline Var operator+(Var a, double c) { return add_scalar(a, c); }
inline Var operator+(double c, Var a) { return add_scalar(a, c); }
inline Var operator-(Var a, double c) { return add_scalar(a, -c); }

}  // namespace comrl::nd
