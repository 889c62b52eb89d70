#pragma once

#include "comrl/ndmath/autodiff.hpp"
#include "comrl/ndmath/rng.hpp"

#include <string>
#include <vector>

namespace comrl::nd {

enum class Activation { ReLU, Tanh };

struct MlpSpec {
  std::size_t in = 0;
  std::vector<std::size_t> hidden;
  std::size_t out = 0;
  Activation activation = Activation::ReLU;
};

/// Fully connected network, hidden layers activated, output layer linear.
class Mlp {
 public:
  Mlp() = default;
  Mlp(const std::string& name, MlpSpec spec, Rng& rng);

  /// With track=false the weights enter the tape as constants, so no
  /// gradient flows into this network (inputs still get gradients).
  Var forward(Tape& tape, Var x, bool track = true);
  /// Tape-free forward pass.
  Tensor forward_value(const Tensor& x) const;

  std::vector<Parameter*> parameters();
  std::vector<const Parameter*> parameters() const;
  const MlpSpec& spec() const { return spec_; }

 private:
  MlpSpec spec_;
  std::vector<Parameter> weights_;
  std::vector<Parameter> biases_;
};

}  // namespace comrl::nd
