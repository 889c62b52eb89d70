#include "doctest.h"
#include "test_util.hpp"

#include "comrl/errors.hpp"
#include "comrl/losses/losses.hpp"

#include <cmath>

using namespace comrl;
using namespace comrl::losses;
using nd::Tape;
using nd::Tensor;
using nd::Var;
using testutil::grad_check;
using testutil::random_tensor;

namespace {

// Sparse square matrix whose support is a DAG under a random order.
Tensor random_dag(std::size_t n, nd::Rng& rng) {
  std::vector<std::size_t> order(n);
  for (std::size_t i = 0; i < n; ++i) order[i] = i;
  for (std::size_t i = n; i > 1; --i) std::swap(order[i - 1], order[rng.index(i)]);
  Tensor a(n, n);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = i + 1; j < n; ++j)
      if (rng.uniform() < 0.4) a(order[i], order[j]) = rng.uniform(-2, 2);
  return a;
}

}  // namespace

TEST_SUITE("losses") {

TEST_CASE("weights validation") {
  LossWeights w;
  CHECK_NOTHROW(w.validate());
  w.c_dag = 0;
  CHECK_THROWS_AS(w.validate(), ConfigError);
  w = LossWeights{};
  w.varsigma = -1;
  CHECK_THROWS_AS(w.validate(), ConfigError);
  w = LossWeights{};
  w.alpha = NAN;
  CHECK_THROWS_AS(w.validate(), ConfigError);
}

TEST_CASE("elbo: standard normal posterior, prior and perfect reconstruction give 0") {
  Tape t;
  nd::Rng rng(1);
  const Var tau = t.constant(random_tensor(3, 6, rng));
  const auto terms = elbo_terms(tau, tau, t.constant(Tensor(3, 4, 0.0)), t.constant(Tensor(3, 4, 1.0)),
                                t.constant(Tensor::identity(4)), t.constant(Tensor(3, 4, 0.0)),
                                t.constant(Tensor(3, 4, 1.0)));
  CHECK(terms.elbo.item() == 0.0);
  CHECK(terms.kl_eps.item() == 0.0);
  CHECK(terms.kl_z.item() == 0.0);
}

TEST_CASE("gaussian KL with mu = 2 contributes 2") {
  Tape t;
  const Var kl = diag_gaussian_kl(t.constant(Tensor{{2.0}}), t.constant(Tensor{{1.0}}), t.constant(Tensor{{0.0}}),
                                  t.constant(Tensor{{1.0}}));
  CHECK(kl.item() == doctest::Approx(2.0).epsilon(1e-15));
  // Unit KL in eps: the elbo with A = 0 and a matching prior drops by exactly 2.
  const Var e = elbo(t.constant(Tensor{{0.0}}), t.constant(Tensor{{0.0}}), t.constant(Tensor{{2.0}}),
                     t.constant(Tensor{{1.0}}), t.constant(Tensor::identity(1)), t.constant(Tensor{{2.0}}),
                     t.constant(Tensor{{1.0}}));
  CHECK(e.item() == doctest::Approx(-2.0).epsilon(1e-15));
}

TEST_CASE("elbo KL terms are non-negative and sigma must be positive") {
  nd::Rng rng(2);
  for (int trial = 0; trial < 100; ++trial) {
    Tape t;
    Tensor a = random_tensor(3, 3, rng, -0.4, 0.4);
    for (std::size_t i = 0; i < 3; ++i) a(i, i) = 0;
    const Var m = t.constant(Tensor::identity(3)) - nd::transpose(t.constant(a));
    const auto terms = elbo_terms(t.constant(random_tensor(2, 5, rng)), t.constant(random_tensor(2, 5, rng)),
                                  t.constant(random_tensor(2, 3, rng)), t.constant(random_tensor(2, 3, rng, 0.2, 2)),
                                  m, t.constant(random_tensor(2, 3, rng)), t.constant(random_tensor(2, 3, rng, 0.2, 2)));
    CHECK(terms.kl_eps.item() >= 0.0);
    CHECK(terms.kl_z.item() >= 0.0);
  }
  Tape t;
  CHECK_THROWS_AS(elbo(t.constant(Tensor{{0.0}}), t.constant(Tensor{{0.0}}), t.constant(Tensor{{0.0}}),
                       t.constant(Tensor{{0.0}}), t.constant(Tensor::identity(1)), t.constant(Tensor{{0.0}}),
                       t.constant(Tensor{{1.0}})),
                  NumericalError);
}

TEST_CASE("elbo gradient matches finite differences") {
  nd::Rng rng(3);
  double worst = 0;
  for (int trial = 0; trial < 100; ++trial) {
    Tensor a = random_tensor(3, 3, rng, -0.4, 0.4);
    auto fn = [](Tape& t, const std::vector<Var>& v) {
      const Var m = t.constant(Tensor::identity(3)) - nd::transpose(v[4]);
      return elbo(v[0], v[1], v[2], nd::exp(v[3]), m, v[5], nd::exp(v[6]));
    };
    worst = std::max(worst, grad_check(fn, {random_tensor(2, 5, rng), random_tensor(2, 5, rng), random_tensor(2, 3, rng),
                                            random_tensor(2, 3, rng), a, random_tensor(2, 3, rng),
                                            random_tensor(2, 3, rng)}));
  }
  CHECK(worst < 1e-4);
}

TEST_CASE("dag penalty examples") {
  CHECK(dag_penalty(Tensor(5, 5, 0.0), 4.0) == 0.0);
  CHECK(dag_penalty(Tensor{{0, 1}, {1, 0}}, 4.0) == doctest::Approx(8.0).epsilon(1e-15));
  nd::Rng rng(4);
  for (int trial = 0; trial < 200; ++trial) {
    const std::size_t n = 2 + rng.index(15);
    Tensor a(n, n);
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < i; ++j) a(i, j) = rng.uniform(-3, 3);
    CHECK(std::abs(dag_penalty(a, 4.0)) < 1e-12);
    CHECK(dag_penalty(random_dag(n, rng), 4.0) == doctest::Approx(0.0));
  }
  for (int trial = 0; trial < 200; ++trial) CHECK(dag_penalty(random_tensor(4, 4, rng, -2, 2), 4.0) >= 0.0);
}

TEST_CASE("dag penalty gradient") {
  nd::Rng rng(5);
  double worst = 0;
  for (int trial = 0; trial < 100; ++trial) {
    auto fn = [](Tape&, const std::vector<Var>& v) { return dag_penalty(v[0], 4.0); };
    worst = std::max(worst, grad_check(fn, {random_tensor(4, 4, rng)}));
  }
  CHECK(worst < 1e-4);
}

TEST_CASE("task info penalty examples and gradient") {
  Tape t;
  CHECK(task_info_penalty(t.constant(Tensor(1, 8, 0.0)), t.constant(Tensor(8, 8, 0.0))).item() ==
        doctest::Approx(2.0).epsilon(1e-15));
  // u = 0.5 is a fixed point of sigmoid(A^T u) with A = 0.
  CHECK(task_info_penalty(t.constant(Tensor(2, 4, 0.5)), t.constant(Tensor(4, 4, 0.0))).item() == 0.0);
  nd::Rng rng(6);
  double worst = 0;
  for (int trial = 0; trial < 100; ++trial) {
    auto fn = [](Tape&, const std::vector<Var>& v) { return task_info_penalty(v[0], v[1]); };
    worst = std::max(worst, grad_check(fn, {random_tensor(3, 4, rng), random_tensor(4, 4, rng)}));
  }
  CHECK(worst < 1e-4);
}

TEST_CASE("causal, contrastive and combined composition") {
  const LossWeights w;
  CHECK(causal_loss(-1.0, 2.0, 3.0, w) == doctest::Approx(4.6).epsilon(1e-15));
  LossWeights zero = w;
  zero.alpha = zero.beta = 0;
  CHECK(causal_loss(-1.7, 2.0, 3.0, zero) == 1.7);
  CHECK(causal_loss(-1.0, 3.0, 3.0, w) > causal_loss(-1.0, 2.0, 3.0, w));
  CHECK(combined_loss(contrastive_loss(1.0, 0.5, w), 0.3, w) == doctest::Approx(3.3).epsilon(1e-15));
  LossWeights off = w;
  off.delta = off.kappa = off.nu = 0;
  CHECK(combined_loss(contrastive_loss(1.0, 0.5, off), 0.3, off) == 0.0);
  Tape t;
  const Var v = combined_loss(contrastive_loss(t.constant(Tensor::scalar(1.0)), t.constant(Tensor::scalar(0.5)), w),
                              t.constant(Tensor::scalar(0.3)), w);
  CHECK(v.item() == combined_loss(contrastive_loss(1.0, 0.5, w), 0.3, w));
}

TEST_CASE("make_negatives") {
  nd::Rng rng(7);
  dataset::TaskContext ctx{0, 0, random_tensor(32, 12, rng)};
  for (std::size_t r = 0; r < 32; ++r) ctx.data(r, 11) = r == 31 ? 1.0 : 0.0;
  nd::Rng r1(1);
  for (const auto& n : make_negatives(ctx, 0.0, 3, r1)) CHECK(n.data == ctx.data);
  nd::Rng a(2), b(2);
  const auto na = make_negatives(ctx, 0.1, 4, a), nb = make_negatives(ctx, 0.1, 4, b);
  for (std::size_t k = 0; k < 4; ++k) CHECK(na[k].data == nb[k].data);
  nd::Rng big(3);
  double s = 0;
  std::size_t cnt = 0;
  for (const auto& n : make_negatives(ctx, 0.1, 30, big)) {
    for (std::size_t r = 0; r < 32; ++r) {
      CHECK(n.data(r, 11) == ctx.data(r, 11));
      for (std::size_t c = 0; c < 11; ++c, ++cnt) s += n.data(r, c) - ctx.data(r, c);
    }
  }
  CHECK(std::abs(s / static_cast<double>(cnt)) < 3 * 0.1 / std::sqrt(static_cast<double>(cnt)));
  CHECK_THROWS(make_negatives(ctx, 0.1, 0, big));
}

TEST_CASE("info_nce examples") {
  Tape t;
  const Var z = t.constant(Tensor{{1.0, 0.0, 0.0}});
  const std::vector<Var> one{t.constant(Tensor{{0.0, 2.0, 0.0}})};
  CHECK(info_nce(z, z, one).item() == doctest::Approx(std::log(1 + std::exp(-1.0))).epsilon(1e-15));
  CHECK(std::abs(info_nce(z, z, one).item() - 0.3133) < 1e-4);
  const std::vector<Var> none{t.constant(Tensor(0, 3))};
  CHECK(info_nce(z, z, none).item() == doctest::Approx(0.0));
  const std::vector<Var> zero_neg{t.constant(Tensor{{0.0, 0.0, 0.0}})};
  CHECK_THROWS_AS(info_nce(z, z, zero_neg), NumericalError);
}

TEST_CASE("info_nce bounds and gradient") {
  nd::Rng rng(8);
  for (int trial = 0; trial < 200; ++trial) {
    Tape t;
    const std::size_t p = 1 + rng.index(4), k = 1 + rng.index(6);
    std::vector<Var> negs;
    for (std::size_t i = 0; i < p; ++i) negs.push_back(t.constant(random_tensor(k, 5, rng)));
    const double v = info_nce(t.constant(random_tensor(p, 5, rng)), t.constant(random_tensor(p, 5, rng)), negs).item();
    CHECK(v > 0.0);
    CHECK(v <= 2.0 + std::log(static_cast<double>(k + 1)));
  }
  double worst = 0;
  for (int trial = 0; trial < 100; ++trial) {
    auto fn = [](Tape&, const std::vector<Var>& v) {
      const std::vector<Var> negs{v[2], nd::slice_rows(v[2], 0, 2)};
      return info_nce(v[0], v[1], negs);
    };
    worst = std::max(worst, grad_check(fn, {random_tensor(2, 4, rng), random_tensor(2, 4, rng), random_tensor(3, 4, rng)}));
  }
  CHECK(worst < 1e-4);
}

TEST_CASE("triplet examples") {
  Tape t;
  // z0 = z1 (same task) and a lone other-task point z2 at squared distance
  // 0.5: each of the two anchors contributes max(0, 0 - 0.5 + e^0) = 0.5.
  const Var z = t.constant(Tensor{{0.0, 0.0}, {0.0, 0.0}, {std::sqrt(0.5), 0.0}});
  const std::vector<int> three{0, 0, 1};
  CHECK(triplet_adaptive(z, three).item() == doctest::Approx(1.0).epsilon(1e-12));
  const std::vector<int> labels{0, 0, 1, 1};
  const Var far = t.constant(Tensor{{0.0, 0.0}, {0.1, 0.0}, {1e3, 0.0}, {1e3, 0.1}});
  CHECK(triplet_adaptive(far, labels).item() == 0.0);
  const std::vector<int> single{0, 0, 0};
  CHECK_THROWS(triplet_adaptive(z, single));
}

TEST_CASE("triplet and hardest gradients and signs") {
  nd::Rng rng(9);
  const std::vector<int> labels{0, 0, 1, 1, 2, 2};
  double worst = 0;
  for (int trial = 0; trial < 100; ++trial) {
    auto fn = [&](Tape&, const std::vector<Var>& v) {
      return triplet_adaptive(v[0], labels) + hardest_negative(v[0], labels, 1e-6);
    };
    const Tensor z = random_tensor(6, 3, rng);
    Tape t;
    CHECK(triplet_adaptive(t.constant(z), labels).item() >= 0.0);
    CHECK(hardest_negative(t.constant(z), labels, 1e-6).item() > 0.0);
    worst = std::max(worst, grad_check(fn, {z}));
  }
  CHECK(worst < 1e-4);
}

TEST_CASE("hardest negative examples") {
  Tape t;
  const std::vector<int> labels{0, 1};
  const double r = std::sqrt(2.0);
  CHECK(hardest_negative(t.constant(Tensor{{0.0}, {r}}), labels, 1e-6).item() ==
        doctest::Approx(1.0 / (2.0 + 1e-6)).epsilon(1e-14));
  CHECK(hardest_negative(t.constant(Tensor{{1.0}, {1.0}}), labels, 1e-6).item() == doctest::Approx(1e6));
  CHECK(hardest_negative(t.constant(Tensor{{0.0}, {2.0}}), labels, 1e-6).item() <
        hardest_negative(t.constant(Tensor{{0.0}, {1.0}}), labels, 1e-6).item());
  const std::vector<int> single{0, 0};
  CHECK_THROWS(hardest_negative(t.constant(Tensor{{0.0}, {1.0}}), single, 1e-6));
}

TEST_CASE("full composition gradient") {
  nd::Rng rng(10);
  const LossWeights w;
  const std::vector<int> labels{0, 1, 0, 1};
  double worst = 0;
  for (int trial = 0; trial < 100; ++trial) {
    auto fn = [&](Tape&, const std::vector<Var>& v) {
      const Var z = v[0];
      const std::vector<Var> negs{v[1], v[1]};
      const Var info = info_nce(nd::slice_rows(z, 0, 2), nd::slice_rows(z, 2, 4), negs);
      return combined_loss(contrastive_loss(triplet_adaptive(z, labels), hardest_negative(z, labels, w.varsigma), w),
                           info, w);
    };
    worst = std::max(worst, grad_check(fn, {random_tensor(4, 3, rng), random_tensor(2, 3, rng)}));
  }
  CHECK(worst < 1e-4);
}

}  // TEST_SUITE
