#pragma once

#include "comrl/dataset/dataset.hpp"
#include "comrl/ndmath/autodiff.hpp"
#include "comrl/ndmath/finite_diff.hpp"
#include "comrl/ndmath/rng.hpp"

#include <filesystem>
#include <fstream>
#include <iterator>
#include <functional>
#include <string>
#include <vector>

namespace testutil {

using comrl::nd::Tape;
using comrl::nd::Tensor;
using comrl::nd::Var;

inline Tensor random_tensor(std::size_t r, std::size_t c, comrl::nd::Rng& rng, double lo = -1.0, double hi = 1.0) {
  Tensor t(r, c);
  for (auto& v : t.values()) v = rng.uniform(lo, hi);
  return t;
}

/// Builds a scalar from the given leaves on a fresh tape.
using LossFn = std::function<Var(Tape&, const std::vector<Var>&)>;

/// Largest relative error between backward() and central differences over
/// all inputs.
inline double grad_check(const LossFn& f, const std::vector<Tensor>& inputs, double h = 1e-5) {
  Tape tape;
  std::vector<Var> vars;
  for (const auto& x : inputs) vars.push_back(tape.variable(x));
  const Var loss = f(tape, vars);
  tape.backward(loss);
  double worst = 0.0;
  for (std::size_t k = 0; k < inputs.size(); ++k) {
    const Tensor analytic = tape.grad(vars[k]);
    const Tensor numeric = comrl::nd::finite_diff_grad(
        [&](const Tensor& xk) {
          Tape t2;
          std::vector<Var> v2;
          for (std::size_t j = 0; j < inputs.size(); ++j) v2.push_back(t2.constant(j == k ? xk : inputs[j]));
          return f(t2, v2).item();
        },
        inputs[k], h);
    worst = std::max(worst, comrl::nd::relative_error(analytic, numeric));
  }
  return worst;
}

/// Synthetic dataset with random records; every `episode`-th row is terminal.
inline comrl::dataset::OfflineTaskDataset random_dataset(std::size_t n, std::uint64_t seed, int episode = 64,
                                                         comrl::envs::TaskFamily family = comrl::envs::TaskFamily::PointVel,
                                                         int task_id = 0) {
  comrl::nd::Rng rng(seed);
  comrl::envs::TaskSpec task{family, family == comrl::envs::TaskFamily::PointVel ? rng.uniform(0, 3) : rng.uniform(0, 6),
                             1.0, 0.0, task_id};
  comrl::dataset::OfflineTaskDataset ds(task);
  const double shift = static_cast<double>(task_id);
  for (std::size_t i = 0; i < n; ++i) {
    std::vector<double> s(4), a(2), sn(4);
    for (auto& v : s) v = rng.normal() + shift;
    for (auto& v : a) v = rng.uniform(-1, 1);
    for (auto& v : sn) v = rng.normal() + shift;
    ds.push_back(s, a, sn, rng.normal() - shift, (i + 1) % static_cast<std::size_t>(episode) == 0);
  }
  return ds;
}

inline std::filesystem::path temp_dir(const std::string& name) {
  const auto p = std::filesystem::temp_directory_path() / ("comrl_test_" + name);
  std::filesystem::remove_all(p);
  std::filesystem::create_directories(p);
  return p;
}

inline std::string read_file(const std::filesystem::path& p) {
  std::ifstream is(p, std::ios::binary);
  return std::string(std::istreambuf_iterator<char>(is), {});
}

}  // namespace testutil
