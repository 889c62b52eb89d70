#include "comrl/ndmath/autodiff.hpp"

#include "comrl/errors.hpp"
#include "comrl/ndmath/linalg.hpp"

#include <algorithm>
#include <cmath>
#include <memory>
#include <numeric>

namespace comrl::nd {

const Tensor& Var::value() const { return tape_->value(id_); }
bool Var::requires_grad() const { return tape_->needs_grad(id_); }

// ---------------------------------------------------------------- Tape

Var Tape::constant(Tensor value) {
  if (!value.all_finite()) throw NumericalError("non-finite value in constant");
  nodes_.push_back(Node{std::move(value), {}, false, {}, nullptr});
  return Var(this, nodes_.size() - 1);
}

Var Tape::variable(Tensor value) {
  if (!value.all_finite()) throw NumericalError("non-finite value in variable");
  nodes_.push_back(Node{std::move(value), {}, true, {}, nullptr});
  return Var(this, nodes_.size() - 1);
}

Var Tape::param(Parameter& p) {
  if (!p.value.all_finite()) throw NumericalError("non-finite parameter '" + p.name + "'");
  nodes_.push_back(Node{p.value, {}, true, {}, &p});
  return Var(this, nodes_.size() - 1);
}

Var Tape::record(std::string_view op, Tensor value, std::initializer_list<Var> inputs, BackwardFn fn) {
  return record(op, std::move(value), std::span<const Var>(inputs.begin(), inputs.size()), std::move(fn));
}

Var Tape::record(std::string_view op, Tensor value, std::span<const Var> inputs, BackwardFn fn) {
  if (!value.all_finite()) {
    throw NumericalError("non-finite output in primitive '" + std::string(op) + "'");
  }
  bool rg = false;
  for (const Var& v : inputs) {
    if (v.tape() != this) throw std::logic_error("primitive '" + std::string(op) + "' mixes tapes");
    rg = rg || nodes_[v.id()].requires_grad;
  }
  nodes_.push_back(Node{std::move(value), {}, rg, rg ? std::move(fn) : BackwardFn{}, nullptr});
  return Var(this, nodes_.size() - 1);
}

Tensor& Tape::grad_buffer(std::size_t id) {
  Node& n = nodes_[id];
  if (n.grad.empty() && !n.value.empty()) n.grad = Tensor(n.value.rows(), n.value.cols());
  return n.grad;
}

void Tape::backward(Var loss) {
  if (loss.tape() != this) throw std::logic_error("backward: loss is not on this tape");
  if (value(loss.id()).size() != 1) {
    throw ShapeError("backward: loss must be scalar, got " + value(loss.id()).shape_str());
  }
  for (Node& n : nodes_) {
    n.grad = Tensor();
    if (n.param != nullptr) n.param->zero_grad();
  }
  if (!nodes_[loss.id()].requires_grad) return;
  grad_buffer(loss.id())[0] = 1.0;
  for (std::size_t i = loss.id() + 1; i-- > 0;) {
    Node& n = nodes_[i];
    if (n.grad.empty()) continue;
    if (n.backward) n.backward(*this, i);
    if (n.param != nullptr) n.param->grad.mat() += n.grad.mat();
  }
}

Tensor Tape::grad(Var v) const {
  const Node& n = nodes_[v.id()];
  if (n.grad.empty()) return Tensor(n.value.rows(), n.value.cols());
  return n.grad;
}

// ---------------------------------------------------------------- helpers

namespace {

void require_same(std::string_view op, Var a, Var b) {
  if (!a.value().same_shape(b.value())) {
    throw ShapeError(std::string(op) + ": shape mismatch " + a.value().shape_str() + " vs " +
                     b.value().shape_str());
  }
}

Tape& tape_of(Var v) {
  if (!v.valid()) throw std::logic_error("use of an unbound Var");
  return *v.tape();
}

template <class F>
Var unary(std::string_view op, Var x, F&& f, Tape::BackwardFn bw) {
  Tensor out = x.value();
  for (double& v : out.values()) v = f(v);
  return tape_of(x).record(op, std::move(out), {x}, std::move(bw));
}

}  // namespace

// ---------------------------------------------------------------- elementwise

Var add(Var a, Var b) {
  require_same("add", a, b);
  Tensor out = a.value();
  out.mat() += b.value().mat();
  const std::size_t ia = a.id(), ib = b.id();
  return tape_of(a).record("add", std::move(out), {a, b}, [ia, ib](Tape& t, std::size_t self) {
    const Tensor& g = t.out_grad(self);
    if (t.needs_grad(ia)) t.grad_buffer(ia).mat() += g.mat();
    if (t.needs_grad(ib)) t.grad_buffer(ib).mat() += g.mat();
  });
}

Var sub(Var a, Var b) {
  require_same("sub", a, b);
  Tensor out = a.value();
  out.mat() -= b.value().mat();
  const std::size_t ia = a.id(), ib = b.id();
  return tape_of(a).record("sub", std::move(out), {a, b}, [ia, ib](Tape& t, std::size_t self) {
    const Tensor& g = t.out_grad(self);
    if (t.needs_grad(ia)) t.grad_buffer(ia).mat() += g.mat();
    if (t.needs_grad(ib)) t.grad_buffer(ib).mat() -= g.mat();
  });
}

Var mul(Var a, Var b) {
  require_same("mul", a, b);
  Tensor out = a.value();
  out.mat().array() *= b.value().mat().array();
  const std::size_t ia = a.id(), ib = b.id();
  return tape_of(a).record("mul", std::move(out), {a, b}, [ia, ib](Tape& t, std::size_t self) {
    const Tensor& g = t.out_grad(self);
    if (t.needs_grad(ia)) t.grad_buffer(ia).mat().array() += g.mat().array() * t.value(ib).mat().array();
    if (t.needs_grad(ib)) t.grad_buffer(ib).mat().array() += g.mat().array() * t.value(ia).mat().array();
  });
}

Var div(Var a, Var b) {
  require_same("div", a, b);
  Tensor out = a.value();
  out.mat().array() /= b.value().mat().array();
  const std::size_t ia = a.id(), ib = b.id();
  return tape_of(a).record("div", std::move(out), {a, b}, [ia, ib](Tape& t, std::size_t self) {
    const auto g = t.out_grad(self).mat().array();
    const auto bv = t.value(ib).mat().array();
    if (t.needs_grad(ia)) t.grad_buffer(ia).mat().array() += g / bv;
    if (t.needs_grad(ib)) t.grad_buffer(ib).mat().array() -= g * t.value(ia).mat().array() / (bv * bv);
  });
}

Var add_rowvec(Var x, Var row) {
  if (row.rows() != 1 || row.cols() != x.cols()) {
    throw ShapeError("add_rowvec: " + x.value().shape_str() + " + " + row.value().shape_str());
  }
  Tensor out = x.value();
  out.mat().rowwise() += row.value().mat().row(0);
  const std::size_t ix = x.id(), ir = row.id();
  return tape_of(x).record("add_rowvec", std::move(out), {x, row}, [ix, ir](Tape& t, std::size_t self) {
    const Tensor& g = t.out_grad(self);
    if (t.needs_grad(ix)) t.grad_buffer(ix).mat() += g.mat();
    if (t.needs_grad(ir)) t.grad_buffer(ir).mat() += g.mat().colwise().sum();
  });
}

Var mul_rowvec(Var x, Var row) {
  if (row.rows() != 1 || row.cols() != x.cols()) {
    throw ShapeError("mul_rowvec: " + x.value().shape_str() + " * " + row.value().shape_str());
  }
  Tensor out = x.value();
  out.mat().array().rowwise() *= row.value().mat().row(0).array();
  const std::size_t ix = x.id(), ir = row.id();
  return tape_of(x).record("mul_rowvec", std::move(out), {x, row}, [ix, ir](Tape& t, std::size_t self) {
    const Tensor& g = t.out_grad(self);
    if (t.needs_grad(ix)) {
      t.grad_buffer(ix).mat().array() += g.mat().array().rowwise() * t.value(ir).mat().row(0).array();
    }
    if (t.needs_grad(ir)) {
      t.grad_buffer(ir).mat() += (g.mat().array() * t.value(ix).mat().array()).matrix().colwise().sum();
    }
  });
}

Var div_colvec(Var x, Var col) {
  if (col.cols() != 1 || col.rows() != x.rows()) {
    throw ShapeError("div_colvec: " + x.value().shape_str() + " / " + col.value().shape_str());
  }
  Tensor out = x.value();
  out.mat().array().colwise() /= col.value().mat().col(0).array();
  const std::size_t ix = x.id(), ic = col.id();
  return tape_of(x).record("div_colvec", std::move(out), {x, col}, [ix, ic](Tape& t, std::size_t self) {
    const Tensor& g = t.out_grad(self);
    const auto c = t.value(ic).mat().col(0).array();
    if (t.needs_grad(ix)) t.grad_buffer(ix).mat().array() += g.mat().array().colwise() / c;
    if (t.needs_grad(ic)) {
      const auto dot = (g.mat().array() * t.value(ix).mat().array()).rowwise().sum();
      t.grad_buffer(ic).mat().col(0).array() -= dot / (c * c);
    }
  });
}

Var add_scalar(Var x, double c) {
  const std::size_t ix = x.id();
  return unary("add_scalar", x, [c](double v) { return v + c; }, [ix](Tape& t, std::size_t self) {
    t.grad_buffer(ix).mat() += t.out_grad(self).mat();
  });
}

Var scale(Var x, double c) {
  const std::size_t ix = x.id();
  return unary("scale", x, [c](double v) { return v * c; }, [ix, c](Tape& t, std::size_t self) {
    t.grad_buffer(ix).mat() += c * t.out_grad(self).mat();
  });
}

Var rdiv(double c, Var x) {
  const std::size_t ix = x.id();
  return unary("rdiv", x, [c](double v) { return c / v; }, [ix, c](Tape& t, std::size_t self) {
    const auto xv = t.value(ix).mat().array();
    t.grad_buffer(ix).mat().array() -= c * t.out_grad(self).mat().array() / (xv * xv);
  });
}

Var neg(Var x) { return scale(x, -1.0); }

Var square(Var x) {
  const std::size_t ix = x.id();
  return unary("square", x, [](double v) { return v * v; }, [ix](Tape& t, std::size_t self) {
    t.grad_buffer(ix).mat().array() += 2.0 * t.out_grad(self).mat().array() * t.value(ix).mat().array();
  });
}

Var sqrt(Var x) {
  const std::size_t ix = x.id();
  return unary("sqrt", x, [](double v) { return std::sqrt(v); }, [ix](Tape& t, std::size_t self) {
    t.grad_buffer(ix).mat().array() += 0.5 * t.out_grad(self).mat().array() / t.value(self).mat().array();
  });
}

Var exp(Var x) {
  const std::size_t ix = x.id();
  return unary("exp", x, [](double v) { return std::exp(v); }, [ix](Tape& t, std::size_t self) {
    t.grad_buffer(ix).mat().array() += t.out_grad(self).mat().array() * t.value(self).mat().array();
  });
}

Var log(Var x) {
  const std::size_t ix = x.id();
  return unary("log", x, [](double v) { return std::log(v); }, [ix](Tape& t, std::size_t self) {
    t.grad_buffer(ix).mat().array() += t.out_grad(self).mat().array() / t.value(ix).mat().array();
  });
}

Var tanh(Var x) {
  const std::size_t ix = x.id();
  return unary("tanh", x, [](double v) { return std::tanh(v); }, [ix](Tape& t, std::size_t self) {
    const auto y = t.value(self).mat().array();
    t.grad_buffer(ix).mat().array() += t.out_grad(self).mat().array() * (1.0 - y * y);
  });
}

namespace {
double logistic(double v) {
  if (v >= 0) return 1.0 / (1.0 + std::exp(-v));
  const double e = std::exp(v);
  return e / (1.0 + e);
}
}  // namespace

Var sigmoid(Var x) {
  const std::size_t ix = x.id();
  return unary("sigmoid", x, logistic, [ix](Tape& t, std::size_t self) {
    const auto y = t.value(self).mat().array();
    t.grad_buffer(ix).mat().array() += t.out_grad(self).mat().array() * y * (1.0 - y);
  });
}

Var softplus(Var x) {
  const std::size_t ix = x.id();
  return unary(
      "softplus", x, [](double v) { return std::max(v, 0.0) + std::log1p(std::exp(-std::abs(v))); },
      [ix](Tape& t, std::size_t self) {
        const Tensor& xv = t.value(ix);
        const Tensor& g = t.out_grad(self);
        Tensor& gx = t.grad_buffer(ix);
        for (std::size_t i = 0; i < xv.size(); ++i) gx[i] += g[i] * logistic(xv[i]);
      });
}

Var relu(Var x) {
  const std::size_t ix = x.id();
  return unary("relu", x, [](double v) { return v > 0.0 ? v : 0.0; }, [ix](Tape& t, std::size_t self) {
    const Tensor& xv = t.value(ix);
    const Tensor& g = t.out_grad(self);
    Tensor& gx = t.grad_buffer(ix);
    for (std::size_t i = 0; i < xv.size(); ++i)
      if (xv[i] > 0.0) gx[i] += g[i];
  });
}

Var clamp(Var x, double lo, double hi) {
  const std::size_t ix = x.id();
  return unary("clamp", x, [lo, hi](double v) { return std::clamp(v, lo, hi); },
               [ix, lo, hi](Tape& t, std::size_t self) {
                 const Tensor& xv = t.value(ix);
                 const Tensor& g = t.out_grad(self);
                 Tensor& gx = t.grad_buffer(ix);
                 for (std::size_t i = 0; i < xv.size(); ++i)
                   if (xv[i] >= lo && xv[i] <= hi) gx[i] += g[i];
               });
}

Var minimum(Var a, Var b) {
  require_same("minimum", a, b);
  Tensor out = a.value();
  out.mat() = out.mat().cwiseMin(b.value().mat());
  const std::size_t ia = a.id(), ib = b.id();
  return tape_of(a).record("minimum", std::move(out), {a, b}, [ia, ib](Tape& t, std::size_t self) {
    const Tensor& av = t.value(ia);
    const Tensor& bv = t.value(ib);
    const Tensor& g = t.out_grad(self);
    const bool ga = t.needs_grad(ia), gb = t.needs_grad(ib);
    for (std::size_t i = 0; i < g.size(); ++i) {
      if (av[i] <= bv[i]) {
        if (ga) t.grad_buffer(ia)[i] += g[i];
      } else if (gb) {
        t.grad_buffer(ib)[i] += g[i];
      }
    }
  });
}

// ---------------------------------------------------------------- reductions

Var sum(Var x) {
  const std::size_t ix = x.id();
  return tape_of(x).record("sum", Tensor::scalar(x.value().mat().sum()), {x}, [ix](Tape& t, std::size_t self) {
    t.grad_buffer(ix).mat().array() += t.out_grad(self)[0];
  });
}

Var mean(Var x) {
  const double n = static_cast<double>(x.value().size());
  if (n == 0) throw ShapeError("mean of empty tensor");
  const std::size_t ix = x.id();
  return tape_of(x).record("mean", Tensor::scalar(x.value().mat().sum() / n), {x}, [ix, n](Tape& t, std::size_t self) {
    t.grad_buffer(ix).mat().array() += t.out_grad(self)[0] / n;
  });
}

Var sum_cols(Var x) {
  Tensor out(x.rows(), 1);
  out.mat() = x.value().mat().rowwise().sum();
  const std::size_t ix = x.id();
  return tape_of(x).record("sum_cols", std::move(out), {x}, [ix](Tape& t, std::size_t self) {
    t.grad_buffer(ix).mat().colwise() += t.out_grad(self).mat().col(0);
  });
}

Var mean_rows(Var x) {
  const double b = static_cast<double>(x.rows());
  Tensor out(1, x.cols());
  out.mat() = x.value().mat().colwise().sum() / b;
  const std::size_t ix = x.id();
  return tape_of(x).record("mean_rows", std::move(out), {x}, [ix, b](Tape& t, std::size_t self) {
    t.grad_buffer(ix).mat().rowwise() += t.out_grad(self).mat().row(0) / b;
  });
}

Var trace(Var x) {
  if (x.rows() != x.cols()) throw ShapeError("trace of non-square " + x.value().shape_str());
  const std::size_t ix = x.id();
  return tape_of(x).record("trace", Tensor::scalar(x.value().mat().trace()), {x}, [ix](Tape& t, std::size_t self) {
    Tensor& g = t.grad_buffer(ix);
    for (std::size_t i = 0; i < g.rows(); ++i) g(i, i) += t.out_grad(self)[0];
  });
}

Var max_all(Var x) {
  if (x.value().empty()) throw ShapeError("max_all of empty tensor");
  const auto vals = x.value().values();
  const std::size_t arg = static_cast<std::size_t>(std::max_element(vals.begin(), vals.end()) - vals.begin());
  const std::size_t ix = x.id();
  return tape_of(x).record("max_all", Tensor::scalar(vals[arg]), {x}, [ix, arg](Tape& t, std::size_t self) {
    t.grad_buffer(ix)[arg] += t.out_grad(self)[0];
  });
}

Var logsumexp_rows(Var x) {
  const Tensor& xv = x.value();
  Tensor out(xv.rows(), 1);
  for (std::size_t r = 0; r < xv.rows(); ++r) {
    const auto row = xv.row(r);
    const double m = *std::max_element(row.begin(), row.end());
    double s = 0.0;
    for (double v : row) s += std::exp(v - m);
    out(r, 0) = m + std::log(s);
  }
  const std::size_t ix = x.id();
  return tape_of(x).record("logsumexp_rows", std::move(out), {x}, [ix](Tape& t, std::size_t self) {
    const Tensor& xv2 = t.value(ix);
    const Tensor& y = t.value(self);
    const Tensor& g = t.out_grad(self);
    Tensor& gx = t.grad_buffer(ix);
    for (std::size_t r = 0; r < xv2.rows(); ++r)
      for (std::size_t c = 0; c < xv2.cols(); ++c) gx(r, c) += g(r, 0) * std::exp(xv2(r, c) - y(r, 0));
  });
}

// ---------------------------------------------------------------- linear algebra

Var matmul(Var a, Var b) {
  if (a.cols() != b.rows()) {
    throw ShapeError("matmul: " + a.value().shape_str() + " x " + b.value().shape_str());
  }
  Tensor out(a.rows(), b.cols());
  out.mat().noalias() = a.value().mat() * b.value().mat();
  const std::size_t ia = a.id(), ib = b.id();
  return tape_of(a).record("matmul", std::move(out), {a, b}, [ia, ib](Tape& t, std::size_t self) {
    const Tensor& g = t.out_grad(self);
    if (t.needs_grad(ia)) t.grad_buffer(ia).mat().noalias() += g.mat() * t.value(ib).mat().transpose();
    if (t.needs_grad(ib)) t.grad_buffer(ib).mat().noalias() += t.value(ia).mat().transpose() * g.mat();
  });
}

Var transpose(Var x) {
  Tensor out(x.cols(), x.rows());
  out.mat() = x.value().mat().transpose();
  const std::size_t ix = x.id();
  return tape_of(x).record("transpose", std::move(out), {x}, [ix](Tape& t, std::size_t self) {
    t.grad_buffer(ix).mat() += t.out_grad(self).mat().transpose();
  });
}

Var solve(Var m, Var b) {
  if (m.rows() != m.cols() || b.rows() != m.rows()) {
    throw ShapeError("solve: M " + m.value().shape_str() + ", rhs " + b.value().shape_str());
  }
  auto lu = std::make_shared<LuFactorization>(m.value());
  Tensor x = lu->solve(b.value());
  const std::size_t im = m.id(), ib = b.id();
  return tape_of(m).record("solve", std::move(x), {m, b}, [im, ib, lu](Tape& t, std::size_t self) {
    // gB = M^-T gX, gM = -gB X^T
    const Tensor gb = lu->solve_transposed(t.out_grad(self));
    if (t.needs_grad(ib)) t.grad_buffer(ib).mat() += gb.mat();
    if (t.needs_grad(im)) t.grad_buffer(im).mat().noalias() -= gb.mat() * t.value(self).mat().transpose();
  });
}

Var pairwise_sqdist(Var z) {
  const Tensor& zv = z.value();
  const std::size_t n = zv.rows(), d = zv.cols();
  Tensor out(n, n);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = i + 1; j < n; ++j) {
      double s = 0.0;
      for (std::size_t k = 0; k < d; ++k) {
        const double diff = zv(i, k) - zv(j, k);
        s += diff * diff;
      }
      out(i, j) = s;
      out(j, i) = s;
    }
  const std::size_t iz = z.id();
  return tape_of(z).record("pairwise_sqdist", std::move(out), {z}, [iz](Tape& t, std::size_t self) {
    const Tensor& zv2 = t.value(iz);
    const Tensor& g = t.out_grad(self);
    Tensor& gz = t.grad_buffer(iz);
    const std::size_t n2 = zv2.rows(), d2 = zv2.cols();
    for (std::size_t i = 0; i < n2; ++i)
      for (std::size_t j = 0; j < n2; ++j) {
        if (i == j) continue;
        const double w = 2.0 * (g(i, j) + g(j, i));
        if (w == 0.0) continue;
        for (std::size_t k = 0; k < d2; ++k) gz(i, k) += w * (zv2(i, k) - zv2(j, k));
      }
  });
}

// ---------------------------------------------------------------- structure

Var slice_cols(Var x, std::size_t begin, std::size_t end) {
  if (begin > end || end > x.cols()) throw ShapeError("slice_cols out of range on " + x.value().shape_str());
  Tensor out(x.rows(), end - begin);
  out.mat() = x.value().mat().middleCols(static_cast<Eigen::Index>(begin), static_cast<Eigen::Index>(end - begin));
  const std::size_t ix = x.id();
  return tape_of(x).record("slice_cols", std::move(out), {x}, [ix, begin, end](Tape& t, std::size_t self) {
    t.grad_buffer(ix).mat().middleCols(static_cast<Eigen::Index>(begin), static_cast<Eigen::Index>(end - begin)) +=
        t.out_grad(self).mat();
  });
}

Var slice_rows(Var x, std::size_t begin, std::size_t end) {
  if (begin > end || end > x.rows()) throw ShapeError("slice_rows out of range on " + x.value().shape_str());
  Tensor out(end - begin, x.cols());
  out.mat() = x.value().mat().middleRows(static_cast<Eigen::Index>(begin), static_cast<Eigen::Index>(end - begin));
  const std::size_t ix = x.id();
  return tape_of(x).record("slice_rows", std::move(out), {x}, [ix, begin, end](Tape& t, std::size_t self) {
    t.grad_buffer(ix).mat().middleRows(static_cast<Eigen::Index>(begin), static_cast<Eigen::Index>(end - begin)) +=
        t.out_grad(self).mat();
  });
}

Var concat_cols(std::span<const Var> parts) {
  if (parts.empty()) throw ShapeError("concat_cols of nothing");
  const std::size_t rows = parts[0].rows();
  std::size_t cols = 0;
  for (const Var& p : parts) {
    if (p.rows() != rows) throw ShapeError("concat_cols: row mismatch");
    cols += p.cols();
  }
  Tensor out(rows, cols);
  std::vector<std::size_t> ids, offsets;
  std::size_t off = 0;
  for (const Var& p : parts) {
    out.mat().middleCols(static_cast<Eigen::Index>(off), static_cast<Eigen::Index>(p.cols())) = p.value().mat();
    ids.push_back(p.id());
    offsets.push_back(off);
    off += p.cols();
  }
  return tape_of(parts[0]).record("concat_cols", std::move(out), parts, [ids, offsets](Tape& t, std::size_t self) {
    const Tensor& g = t.out_grad(self);
    for (std::size_t k = 0; k < ids.size(); ++k) {
      if (!t.needs_grad(ids[k])) continue;
      Tensor& gp = t.grad_buffer(ids[k]);
      gp.mat() += g.mat().middleCols(static_cast<Eigen::Index>(offsets[k]), static_cast<Eigen::Index>(gp.cols()));
    }
  });
}

Var concat_rows(std::span<const Var> parts) {
  if (parts.empty()) throw ShapeError("concat_rows of nothing");
  const std::size_t cols = parts[0].cols();
  std::size_t rows = 0;
  for (const Var& p : parts) {
    if (p.cols() != cols) throw ShapeError("concat_rows: column mismatch");
    rows += p.rows();
  }
  Tensor out(rows, cols);
  std::vector<std::size_t> ids, offsets;
  std::size_t off = 0;
  for (const Var& p : parts) {
    out.mat().middleRows(static_cast<Eigen::Index>(off), static_cast<Eigen::Index>(p.rows())) = p.value().mat();
    ids.push_back(p.id());
    offsets.push_back(off);
    off += p.rows();
  }
  return tape_of(parts[0]).record("concat_rows", std::move(out), parts, [ids, offsets](Tape& t, std::size_t self) {
    const Tensor& g = t.out_grad(self);
    for (std::size_t k = 0; k < ids.size(); ++k) {
      if (!t.needs_grad(ids[k])) continue;
      Tensor& gp = t.grad_buffer(ids[k]);
      gp.mat() += g.mat().middleRows(static_cast<Eigen::Index>(offsets[k]), static_cast<Eigen::Index>(gp.rows()));
    }
  });
}

Var reshape(Var x, std::size_t rows, std::size_t cols) {
  Tensor out = x.value().reshaped(rows, cols);
  const std::size_t ix = x.id();
  return tape_of(x).record("reshape", std::move(out), {x}, [ix](Tape& t, std::size_t self) {
    Tensor& gx = t.grad_buffer(ix);
    const Tensor& g = t.out_grad(self);
    for (std::size_t i = 0; i < g.size(); ++i) gx[i] += g[i];
  });
}

Var gather(Var x, std::vector<std::size_t> idx) {
  const Tensor& xv = x.value();
  Tensor out(1, idx.size());
  for (std::size_t k = 0; k < idx.size(); ++k) {
    if (idx[k] >= xv.size()) throw ShapeError("gather index out of range");
    out[k] = xv[idx[k]];
  }
  const std::size_t ix = x.id();
  return tape_of(x).record("gather", std::move(out), {x}, [ix, idx = std::move(idx)](Tape& t, std::size_t self) {
    Tensor& gx = t.grad_buffer(ix);
    const Tensor& g = t.out_grad(self);
    for (std::size_t k = 0; k < idx.size(); ++k) gx[idx[k]] += g[k];
  });
}

Var repeat_rows(Var x, std::size_t times) {
  const Tensor& xv = x.value();
  Tensor out(xv.rows() * times, xv.cols());
  for (std::size_t r = 0; r < xv.rows(); ++r)
    for (std::size_t k = 0; k < times; ++k) out.mat().row(static_cast<Eigen::Index>(r * times + k)) = xv.mat().row(static_cast<Eigen::Index>(r));
  const std::size_t ix = x.id();
  return tape_of(x).record("repeat_rows", std::move(out), {x}, [ix, times](Tape& t, std::size_t self) {
    Tensor& gx = t.grad_buffer(ix);
    const Tensor& g = t.out_grad(self);
    for (std::size_t r = 0; r < gx.rows(); ++r)
      for (std::size_t k = 0; k < times; ++k) gx.mat().row(static_cast<Eigen::Index>(r)) += g.mat().row(static_cast<Eigen::Index>(r * times + k));
  });
}

Var gaussian_sample(Var mu, Var sigma, Rng& rng) {
  require_same("gaussian_sample", mu, sigma);
  Tensor eta(mu.rows(), mu.cols());
  for (double& v : eta.values()) v = rng.normal();
  Var noise = tape_of(mu).constant(std::move(eta));
  return add(mu, mul(sigma, noise));
}

}  // namespace comrl::nd
