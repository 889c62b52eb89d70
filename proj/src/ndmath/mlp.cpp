#include "comrl/ndmath/mlp.hpp"

#include "comrl/errors.hpp"

#include <cmath>

namespace comrl::nd {

Mlp::Mlp(const std::string& name, MlpSpec spec, Rng& rng) : spec_(std::move(spec)) {
  std::vector<std::size_t> dims{spec_.in};
  dims.insert(dims.end(), spec_.hidden.begin(), spec_.hidden.end());
  dims.push_back(spec_.out);
  for (std::size_t l = 0; l + 1 < dims.size(); ++l) {
    const double bound = 1.0 / std::sqrt(static_cast<double>(std::max<std::size_t>(dims[l], 1)));
    Tensor w(dims[l], dims[l + 1]);
    for (double& v : w.values()) v = rng.uniform(-bound, bound);
    Tensor b(1, dims[l + 1]);
    for (double& v : b.values()) v = rng.uniform(-bound, bound);
    weights_.emplace_back(name + ".W" + std::to_string(l), std::move(w));
    biases_.emplace_back(name + ".b" + std::to_string(l), std::move(b));
  }
}

Var Mlp::forward(Tape& tape, Var x, bool track) {
  if (x.cols() != spec_.in) {
    throw ShapeError("Mlp input has " + std::to_string(x.cols()) + " columns, expected " + std::to_string(spec_.in));
  }
  Var h = x;
  for (std::size_t l = 0; l < weights_.size(); ++l) {
    Var w = track ? tape.param(weights_[l]) : tape.constant(weights_[l].value);
    Var b = track ? tape.param(biases_[l]) : tape.constant(biases_[l].value);
    h = add_rowvec(matmul(h, w), b);
    if (l + 1 < weights_.size()) h = spec_.activation == Activation::ReLU ? relu(h) : tanh(h);
  }
  return h;
}

Tensor Mlp::forward_value(const Tensor& x) const {
  if (x.cols() != spec_.in) {
    throw ShapeError("Mlp input has " + std::to_string(x.cols()) + " columns, expected " + std::to_string(spec_.in));
  }
  RowMatrix h = x.mat();
  for (std::size_t l = 0; l < weights_.size(); ++l) {
    RowMatrix next = h * weights_[l].value.mat();
    next.rowwise() += biases_[l].value.mat().row(0);
    if (l + 1 < weights_.size()) {
      if (spec_.activation == Activation::ReLU) {
        next = next.cwiseMax(0.0);
      } else {
        next = next.array().tanh().matrix();
      }
    }
    h = std::move(next);
  }
  Tensor out = Tensor::from_eigen(h);
  if (!out.all_finite()) throw NumericalError("non-finite output in Mlp forward");
  return out;
}

std::vector<Parameter*> Mlp::parameters() {
  std::vector<Parameter*> out;
  for (std::size_t l = 0; l < weights_.size(); ++l) {
    out.push_back(&weights_[l]);
    out.push_back(&biases_[l]);
  }
  return out;
}

std::vector<const Parameter*> Mlp::parameters() const {
  std::vector<const Parameter*> out;
  for (std::size_t l = 0; l < weights_.size(); ++l) {
    out.push_back(&weights_[l]);
    out.push_back(&biases_[l]);
  }
  return out;
}

}  // namespace comrl::nd
