#include "doctest.h"
#include "test_util.hpp"

#include "comrl/errors.hpp"
#include "comrl/ndmath/adam.hpp"
#include "comrl/ndmath/binary_io.hpp"
#include "comrl/ndmath/linalg.hpp"
#include "comrl/ndmath/mlp.hpp"

#include <cmath>

using namespace comrl;
using nd::Tape;
using nd::Tensor;
using nd::Var;
using testutil::grad_check;
using testutil::random_tensor;

TEST_SUITE("ndmath") {

TEST_CASE("sigmoid of zero is one half everywhere") {
  Tape t;
  const Var s = nd::sigmoid(t.constant(Tensor(3, 4, 0.0)));
  for (double v : s.value().values()) CHECK(v == 0.5);
}

TEST_CASE("identity matmul returns the operand") {
  nd::Rng rng(1);
  Tape t;
  const Tensor x = random_tensor(3, 3, rng);
  CHECK(nd::matmul(t.constant(Tensor::identity(3)), t.constant(x)).value() == x);
}

TEST_CASE("trace of a squared symmetric matrix") {
  Tape t;
  const Var m = t.constant(Tensor{{1, 2}, {2, 1}});
  CHECK(nd::trace(nd::matmul(m, m)).item() == 10.0);
}

TEST_CASE("derivative of x squared at 3") {
  Tape t;
  const Var x = t.variable(Tensor::scalar(3.0));
  t.backward(nd::square(x));
  CHECK(t.grad(x).item() == 6.0);
}

TEST_CASE("non-scalar loss is rejected") {
  Tape t;
  const Var x = t.variable(Tensor(2, 2, 1.0));
  CHECK_THROWS_AS(t.backward(x), ShapeError);
}

TEST_CASE("shape mismatch is rejected") {
  Tape t;
  CHECK_THROWS_AS(nd::add(t.constant(Tensor(2, 2)), t.constant(Tensor(2, 3))), ShapeError);
  CHECK_THROWS_AS(nd::matmul(t.constant(Tensor(2, 2)), t.constant(Tensor(3, 3))), ShapeError);
}

TEST_CASE("non-finite output names the primitive") {
  Tape t;
  try {
    nd::log(t.constant(Tensor::scalar(0.0)));
    FAIL("expected NumericalError");
  } catch (const NumericalError& e) {
    CHECK(std::string(e.what()).find("log") != std::string::npos);
  }
  CHECK_THROWS_AS(nd::exp(t.constant(Tensor::scalar(1000.0))), NumericalError);
}

TEST_CASE("unreachable parameters get zero gradient") {
  nd::Parameter p("p", Tensor(2, 2, 1.0)), q("q", Tensor(2, 2, 1.0));
  q.grad = Tensor(2, 2, 7.0);
  Tape t;
  const Var a = t.param(p);
  t.param(q);
  t.backward(nd::sum(nd::square(a)));
  CHECK(p.grad == Tensor(2, 2, 2.0));
  CHECK(q.grad == Tensor(2, 2, 0.0));
}

TEST_CASE("a parameter used twice accumulates both paths") {
  nd::Parameter p("p", Tensor::scalar(2.0));
  Tape t;
  const Var a = t.param(p), b = t.param(p);
  t.backward(nd::mul(a, b));
  CHECK(p.grad.item() == doctest::Approx(4.0));
}

TEST_CASE("elementwise and reduction primitives pass gradient checks") {
  nd::Rng rng(2);
  const std::vector<std::pair<const char*, testutil::LossFn>> cases = {
      {"add", [](Tape&, const std::vector<Var>& v) { return nd::sum(nd::square(v[0] + v[1])); }},
      {"sub", [](Tape&, const std::vector<Var>& v) { return nd::sum(nd::square(v[0] - v[1])); }},
      {"mul", [](Tape&, const std::vector<Var>& v) { return nd::sum(v[0] * v[1]); }},
      {"div", [](Tape&, const std::vector<Var>& v) { return nd::sum(v[0] / (nd::square(v[1]) + 1.0)); }},
      {"matmul", [](Tape&, const std::vector<Var>& v) { return nd::sum(nd::square(nd::matmul(v[0], nd::transpose(v[1])))); }},
      {"exp_log", [](Tape&, const std::vector<Var>& v) { return nd::sum(nd::log(nd::exp(v[0]) + nd::square(v[1]))); }},
      {"tanh_sigmoid", [](Tape&, const std::vector<Var>& v) { return nd::sum(nd::tanh(v[0]) * nd::sigmoid(v[1])); }},
      {"softplus", [](Tape&, const std::vector<Var>& v) { return nd::mean(nd::softplus(v[0] * v[1])); }},
      {"sqrt", [](Tape&, const std::vector<Var>& v) { return nd::sum(nd::sqrt(nd::square(v[0]) + 0.5)) + nd::sum(v[1]); }},
      {"rdiv", [](Tape&, const std::vector<Var>& v) { return nd::sum(nd::rdiv(2.0, nd::square(v[0]) + 1.0)) + nd::sum(v[1]); }},
      {"rowvec", [](Tape&, const std::vector<Var>& v) {
         return nd::sum(nd::square(nd::add_rowvec(v[0], nd::slice_rows(v[1], 0, 1)))) +
                nd::sum(nd::mul_rowvec(v[0], nd::slice_rows(v[1], 1, 2)));
       }},
      {"div_colvec", [](Tape&, const std::vector<Var>& v) {
         return nd::sum(nd::div_colvec(v[0], nd::square(nd::slice_cols(v[1], 0, 1)) + 1.0));
       }},
      {"reductions", [](Tape&, const std::vector<Var>& v) {
         return nd::sum(nd::square(nd::sum_cols(v[0]))) + nd::sum(nd::square(nd::mean_rows(v[1]))) +
                nd::trace(nd::matmul(v[0], nd::transpose(v[1])));
       }},
      {"max_all", [](Tape&, const std::vector<Var>& v) { return nd::max_all(v[0] * v[1]); }},
      {"logsumexp", [](Tape&, const std::vector<Var>& v) { return nd::sum(nd::logsumexp_rows(v[0] * 3.0 + v[1])); }},
      {"slice_concat", [](Tape&, const std::vector<Var>& v) {
         std::vector<Var> cols{nd::slice_cols(v[0], 1, 3), v[1]};
         std::vector<Var> rows{nd::slice_rows(v[0], 0, 2), nd::slice_rows(v[1], 1, 3)};
         return nd::sum(nd::square(nd::concat_cols(cols))) + nd::sum(nd::exp(nd::concat_rows(rows)));
       }},
      {"reshape_gather", [](Tape&, const std::vector<Var>& v) {
         return nd::sum(nd::square(nd::reshape(v[0], 4, 3))) + nd::sum(nd::gather(v[1], {0, 5, 5, 7}));
       }},
      {"repeat_rows", [](Tape&, const std::vector<Var>& v) {
         return nd::sum(nd::square(nd::repeat_rows(nd::slice_rows(v[0], 0, 1), 3) - v[1]));
       }},
      {"pairwise", [](Tape&, const std::vector<Var>& v) { return nd::sum(nd::sqrt(nd::pairwise_sqdist(v[0]) + 1.0)) + nd::sum(v[1]); }},
      {"minimum", [](Tape&, const std::vector<Var>& v) { return nd::sum(nd::minimum(v[0], v[1])); }},
      {"clamp_relu", [](Tape&, const std::vector<Var>& v) { return nd::sum(nd::clamp(v[0], -0.5, 0.5) + nd::relu(v[1])); }},
      {"neg_scale", [](Tape&, const std::vector<Var>& v) { return nd::sum(-(2.5 * v[0]) * (v[1] - 1.0)); }},
  };
  for (const auto& [name, fn] : cases) {
    double worst = 0.0;
    for (int trial = 0; trial < 100; ++trial) {
      worst = std::max(worst, grad_check(fn, {random_tensor(3, 4, rng), random_tensor(3, 4, rng)}));
    }
    INFO(name);
    CHECK(worst < 1e-4);
  }
}

TEST_CASE("gaussian sample gradient reaches mu and sigma only") {
  nd::Rng rng(3);
  const Tensor mu = random_tensor(2, 3, rng), sigma = random_tensor(2, 3, rng, 0.5, 1.5);
  const nd::Rng noise(99);
  auto fn = [noise](Tape&, const std::vector<Var>& v) {
    nd::Rng r = noise;
    return nd::sum(nd::square(nd::gaussian_sample(v[0], v[1], r)));
  };
  CHECK(grad_check(fn, {mu, sigma}) < 1e-6);
  Tape t;
  nd::Rng r = noise;
  const Var s = nd::gaussian_sample(t.constant(mu), t.constant(sigma), r);
  nd::Rng r2 = noise;
  for (std::size_t i = 0; i < 6; ++i) CHECK(s.value()[i] == doctest::Approx(mu[i] + sigma[i] * r2.normal()));
}

TEST_CASE("dag-style trace power gradient on random 4x4") {
  nd::Rng rng(4);
  for (int trial = 0; trial < 20; ++trial) {
    auto fn = [](Tape& t, const std::vector<Var>& v) {
      const std::size_t n = 4;
      const Var m = t.constant(Tensor::identity(n)) + (4.0 / n) * nd::square(v[0]);
      Var p = m;
      for (std::size_t k = 1; k < n; ++k) p = nd::matmul(p, m);
      return nd::trace(p) - static_cast<double>(n);
    };
    CHECK(grad_check(fn, {random_tensor(4, 4, rng)}) < 1e-6);
  }
}

TEST_CASE("solve gradient w.r.t. the matrix and the right-hand side") {
  nd::Rng rng(5);
  for (int trial = 0; trial < 20; ++trial) {
    Tensor a = random_tensor(4, 4, rng, -0.3, 0.3);
    auto fn = [](Tape& t, const std::vector<Var>& v) {
      const Var m = t.constant(Tensor::identity(4)) - nd::transpose(v[0]);
      return nd::sum(nd::square(nd::solve(m, v[1])));
    };
    CHECK(grad_check(fn, {a, random_tensor(4, 2, rng)}) < 1e-6);
  }
}

TEST_CASE("solve_linear examples") {
  nd::Rng rng(6);
  const Tensor b = random_tensor(3, 1, rng);
  CHECK(nd::solve_linear(Tensor::identity(3), b) == b);
  const Tensor x = nd::solve_linear(Tensor{{1, 0}, {-0.5, 1}}, Tensor{{1}, {1}});
  CHECK(x[0] == doctest::Approx(1.0).epsilon(1e-15));
  CHECK(x[1] == doctest::Approx(1.5).epsilon(1e-15));
  try {
    nd::solve_linear(Tensor(3, 3, 0.0), b);
    FAIL("expected SingularMatrixError");
  } catch (const SingularMatrixError& e) {
    CHECK(e.pivot() == 0.0);
  }
  CHECK_THROWS_AS(nd::solve_linear(Tensor{{1, 2}, {2, 4}}, Tensor{{1}, {1}}), SingularMatrixError);
}

TEST_CASE("solve_linear recovers x0 from M x0") {
  nd::Rng rng(7);
  for (int trial = 0; trial < 100; ++trial) {
    const std::size_t n = 1 + rng.index(8);
    Tensor m = random_tensor(n, n, rng);
    for (std::size_t i = 0; i < n; ++i) m(i, i) += static_cast<double>(n);
    const Tensor x0 = random_tensor(n, 2, rng);
    const Tensor b = Tensor::from_eigen(m.mat() * x0.mat());
    CHECK(nd::relative_error(nd::solve_linear(m, b), x0) < 1e-10);
    const nd::LuFactorization lu(m);
    const Tensor bt = Tensor::from_eigen(m.mat().transpose() * x0.mat());
    CHECK(nd::relative_error(lu.solve_transposed(bt), x0) < 1e-10);
  }
}

TEST_CASE("adam one-step oracle and zero gradient") {
  nd::Parameter p("p", Tensor::scalar(1.0));
  std::vector<nd::Parameter*> ps{&p};
  nd::AdamState st = nd::make_adam(ps, 0.1);
  p.grad = Tensor::scalar(1.0);
  nd::adam_step(ps, st);
  CHECK(p.value.item() == doctest::Approx(0.9).epsilon(1e-7));
  CHECK(st.step_count == 1);

  nd::Parameter q("q", Tensor(2, 2, 3.0));
  std::vector<nd::Parameter*> qs{&q};
  nd::AdamState sq = nd::make_adam(qs, 0.1);
  nd::adam_step(qs, sq);
  CHECK(q.value == Tensor(2, 2, 3.0));
  CHECK(sq.step_count == 1);
}

TEST_CASE("adam is deterministic") {
  nd::Rng rng(8);
  const Tensor init = random_tensor(3, 3, rng), g = random_tensor(3, 3, rng);
  auto run = [&] {
    nd::Parameter p("p", init);
    std::vector<nd::Parameter*> ps{&p};
    nd::AdamState st = nd::make_adam(ps, 3e-4);
    for (int k = 0; k < 5; ++k) {
      p.grad = g;
      nd::adam_step(ps, st);
    }
    return p.value;
  };
  CHECK(run() == run());
}

TEST_CASE("finite differences examples") {
  nd::Rng rng(9);
  const Tensor x = random_tensor(2, 3, rng);
  const Tensor g = nd::finite_diff_grad([](const Tensor& t) { return t.mat().sum(); }, x);
  for (double v : g.values()) CHECK(v == doctest::Approx(1.0).epsilon(1e-9));
  const Tensor g2 = nd::finite_diff_grad([](const Tensor& t) { return t[0] * t[0]; }, Tensor::scalar(2.0), 1e-5);
  CHECK(std::abs(g2.item() - 4.0) < 1e-8);
}

TEST_CASE("two-layer network gradient agrees with finite differences") {
  nd::Rng rng(10);
  for (int trial = 0; trial < 10; ++trial) {
    nd::Mlp net("net", {3, {5}, 2, trial % 2 ? nd::Activation::Tanh : nd::Activation::ReLU}, rng);
    const Tensor x = random_tensor(4, 3, rng);
    Tape t;
    t.backward(nd::sum(nd::square(net.forward(t, t.constant(x)))));
    for (nd::Parameter* p : net.parameters()) {
      const Tensor analytic = p->grad;
      const Tensor saved = p->value;
      const Tensor numeric = nd::finite_diff_grad(
          [&](const Tensor& w) {
            p->value = w;
            Tape t2;
            const double v = nd::sum(nd::square(net.forward(t2, t2.constant(x)))).item();
            p->value = saved;
            return v;
          },
          saved);
      CHECK(nd::relative_error(analytic, numeric) < 1e-4);
    }
    CHECK(net.forward_value(x) == [&] {
      Tape t3;
      return net.forward(t3, t3.constant(x)).value();
    }());
  }
}

TEST_CASE("untracked network blocks parameter gradients") {
  nd::Rng rng(11);
  nd::Mlp net("net", {2, {3}, 1, nd::Activation::ReLU}, rng);
  Tape t;
  const Var x = t.variable(random_tensor(2, 2, rng));
  t.backward(nd::sum(net.forward(t, x, false)));
  for (nd::Parameter* p : net.parameters()) CHECK(p->grad == Tensor(p->value.rows(), p->value.cols()));
}

TEST_CASE("rng determinism, forks and statistics") {
  nd::Rng a(42), b(42);
  for (int i = 0; i < 100; ++i) CHECK(a.next_u64() == b.next_u64());
  CHECK(nd::Rng::named(1, "x").next_u64() != nd::Rng::named(1, "y").next_u64());
  const nd::Rng root(5);
  nd::Rng f1 = root.fork(1), f2 = root.fork(1);
  CHECK(f1.next_u64() == f2.next_u64());
  nd::Rng r(7);
  double s = 0, sq = 0;
  const int n = 100000;
  for (int i = 0; i < n; ++i) {
    const double v = r.normal();
    s += v;
    sq += v * v;
  }
  CHECK(std::abs(s / n) < 3.0 / std::sqrt(n));
  CHECK(sq / n == doctest::Approx(1.0).epsilon(0.02));
  for (int i = 0; i < 1000; ++i) {
    const double u = r.uniform();
    CHECK((u >= 0.0 && u < 1.0));
    CHECK(r.index(7) < 7);
  }
}

TEST_CASE("checkpoint container roundtrip and corruption codes") {
  const auto dir = testutil::temp_dir("ckpt");
  nd::Rng rng(12);
  nd::Checkpoint c{R"({"k":1})", {random_tensor(2, 3, rng), random_tensor(1, 1, rng)}};
  nd::write_checkpoint(dir / "a.bin", "TEST", 3, c);
  const nd::Checkpoint back = nd::read_checkpoint(dir / "a.bin", "TEST", 3);
  CHECK(back.config_json == c.config_json);
  CHECK(back.tensors == c.tensors);

  auto code_of = [&](const std::filesystem::path& p, std::string_view magic, std::uint32_t version) {
    try {
      nd::read_checkpoint(p, magic, version);
    } catch (const nd::FormatError& e) {
      return e.code();
    }
    return nd::FormatErrc::io_error;
  };
  CHECK(code_of(dir / "a.bin", "NOPE", 3) == nd::FormatErrc::bad_magic);
  CHECK(code_of(dir / "a.bin", "TEST", 4) == nd::FormatErrc::version_mismatch);
  std::string bytes = testutil::read_file(dir / "a.bin");
  {
    std::ofstream os(dir / "short.bin", std::ios::binary);
    os << bytes.substr(0, bytes.size() - 3);
  }
  CHECK(code_of(dir / "short.bin", "TEST", 3) == nd::FormatErrc::truncated);
  {
    std::ofstream os(dir / "long.bin", std::ios::binary);
    os << bytes << "xx";
  }
  CHECK(code_of(dir / "long.bin", "TEST", 3) == nd::FormatErrc::dim_mismatch);
  CHECK_THROWS_AS(nd::read_checkpoint(dir / "missing.bin", "TEST", 3), nd::FormatError);
}

}  // TEST_SUITE
