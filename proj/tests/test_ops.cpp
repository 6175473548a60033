#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "mapfuse/ops.hpp"
#include "mapfuse/tape.hpp"
#include "testutil.hpp"

using namespace mapfuse;
using namespace mapfuse::test;

namespace {

// independent normal CDF via an erf Taylor series
double phi_series(double x) {
  const double z = x / std::sqrt(2.0);
  double term = z, acc = z;
  for (int n = 1; n < 60; ++n) {
    term *= -z * z / static_cast<double>(n);
    acc += term / static_cast<double>(2 * n + 1);
  }
  return 0.5 * (1.0 + acc * 2.0 / std::sqrt(M_PI));
}

}  // namespace

TEST_CASE("matmul identity and hand product") {
  Tape<double> t;
  auto eye = t.constant(Tensor<double>({2, 2}, {1, 0, 0, 1}));
  auto m = t.constant(Tensor<double>({2, 2}, {1, 2, 3, 4}));
  auto out = matmul(eye, m);
  CHECK(out.value().v == std::vector<double>{1, 2, 3, 4});

  auto a = t.constant(Tensor<double>({1, 2}, {1, 2}));
  auto b = t.constant(Tensor<double>({2, 1}, {3, 4}));
  CHECK(matmul(a, b).value()[0] == 11.0);

  CHECK_THROWS_AS(matmul(m, a), std::invalid_argument);
}

TEST_CASE("matmul gradient matches finite differences") {
  Rng rng(7);
  Tensor<double> a = random_tensor({3, 4}, rng);
  Tensor<double> b = random_tensor({4, 2}, rng);
  Tensor<double> r = random_tensor({3, 2}, rng);

  auto eval = [&]() {
    Tape<double> t;
    return sum(mul(matmul(t.leaf(a, false), t.leaf(b, false)), t.constant(r))).value()[0];
  };

  Tape<double> t;
  auto va = t.leaf(a), vb = t.leaf(b);
  t.backward(sum(mul(matmul(va, vb), t.constant(r))));
  CHECK(rel_err(t.grad_of(va), finite_diff(a, eval)) < 1e-6);
  CHECK(rel_err(t.grad_of(vb), finite_diff(b, eval)) < 1e-6);
}

TEST_CASE("gelu exact erf form") {
  Tape<double> t;
  auto x = t.constant(Tensor<double>({3}, {0.0, 3.0, -3.0}));
  auto y = gelu(x);
  CHECK(y.value()[0] == 0.0);
  CHECK(y.value()[1] == doctest::Approx(3.0 * phi_series(3.0)).epsilon(1e-3));
  // decays to zero on the far negative side
  CHECK(std::abs(y.value()[2]) < 0.01);
}

TEST_CASE("gelu gradient at fixed probe points") {
  for (double p : {-2.0, -0.5, 0.3, 1.7}) {
    Tensor<double> x({1}, {p});
    auto eval = [&]() {
      Tape<double> t;
      return sum(gelu(t.leaf(x, false))).value()[0];
    };
    Tape<double> t;
    auto vx = t.leaf(x);
    t.backward(sum(gelu(vx)));
    CHECK(rel_err(t.grad_of(vx), finite_diff(x, eval)) < 1e-6);
  }
}

TEST_CASE("layernorm basics") {
  Tape<double> t;
  auto gain = t.constant(Tensor<double>::full({4}, 1.0));
  auto bias = t.constant(Tensor<double>::zeros({4}));

  auto flat = layernorm(t.constant(Tensor<double>::full({1, 4}, 2.5)), gain, bias);
  for (int64_t i = 0; i < 4; ++i) CHECK(flat.value()[i] == doctest::Approx(0.0).epsilon(1e-12));

  auto g2 = t.constant(Tensor<double>::full({2}, 1.0));
  auto b2 = t.constant(Tensor<double>::zeros({2}));
  auto two = layernorm(t.constant(Tensor<double>({1, 2}, {1.0, 3.0})), g2, b2, 1e-12);
  CHECK(two.value()[0] == doctest::Approx(-1.0).epsilon(1e-5));
  CHECK(two.value()[1] == doctest::Approx(1.0).epsilon(1e-5));
}

TEST_CASE("layernorm gradient on 2x4x8") {
  Rng rng(11);
  Tensor<double> x = random_tensor({2, 4, 8}, rng);
  Tensor<double> gain = random_tensor({8}, rng, 0.5);
  Tensor<double> bias = random_tensor({8}, rng, 0.5);
  Tensor<double> r = random_tensor({2, 4, 8}, rng);
  for (int64_t i = 0; i < gain.size(); ++i) gain[i] += 1.0;

  auto eval = [&]() {
    Tape<double> t;
    return sum(mul(layernorm(t.leaf(x, false), t.leaf(gain, false), t.leaf(bias, false)),
                   t.constant(r)))
        .value()[0];
  };
  Tape<double> t;
  auto vx = t.leaf(x), vg = t.leaf(gain), vb = t.leaf(bias);
  t.backward(sum(mul(layernorm(vx, vg, vb), t.constant(r))));
  CHECK(rel_err(t.grad_of(vx), finite_diff(x, eval)) < 1e-5);
  CHECK(rel_err(t.grad_of(vg), finite_diff(gain, eval)) < 1e-5);
  CHECK(rel_err(t.grad_of(vb), finite_diff(bias, eval)) < 1e-5);
}

TEST_CASE("conv2d identity mix and padding arithmetic") {
  Tape<double> t;
  // k=1 kernel that swaps two channels
  Tensor<double> x({2, 2, 2}, {1, 2, 3, 4, 5, 6, 7, 8});
  Tensor<double> w({2, 2, 1, 1}, {0, 1, 1, 0});
  auto out = conv2d(t.constant(x), t.constant(w), t.constant(Tensor<double>::zeros({2})));
  CHECK(out.value().v == std::vector<double>{5, 6, 7, 8, 1, 2, 3, 4});

  auto ones = conv2d(t.constant(Tensor<double>::full({1, 3, 3}, 1.0)),
                     t.constant(Tensor<double>::full({1, 1, 3, 3}, 1.0)),
                     t.constant(Tensor<double>::zeros({1})));
  CHECK(ones.value().at(0, 1, 1) == 9.0);
  CHECK(ones.value().at(0, 0, 0) == 4.0);
  CHECK(ones.value().at(0, 2, 2) == 4.0);
  CHECK(ones.value().at(0, 0, 1) == 6.0);

  CHECK_THROWS_AS(conv2d(t.constant(Tensor<double>::zeros({3, 2, 2})), t.constant(w),
                         t.constant(Tensor<double>::zeros({2}))),
                  std::invalid_argument);
}

TEST_CASE("conv2d gradient on 2x5x5 -> 3 channels") {
  Rng rng(13);
  Tensor<double> x = random_tensor({2, 5, 5}, rng);
  Tensor<double> w = random_tensor({3, 2, 3, 3}, rng, 0.4);
  Tensor<double> b = random_tensor({3}, rng, 0.2);
  Tensor<double> r = random_tensor({3, 5, 5}, rng);

  auto eval = [&]() {
    Tape<double> t;
    return sum(
               mul(conv2d(t.leaf(x, false), t.leaf(w, false), t.leaf(b, false)), t.constant(r)))
        .value()[0];
  };
  Tape<double> t;
  auto vx = t.leaf(x), vw = t.leaf(w), vb = t.leaf(b);
  t.backward(sum(mul(conv2d(vx, vw, vb), t.constant(r))));
  CHECK(rel_err(t.grad_of(vx), finite_diff(x, eval)) < 1e-5);
  CHECK(rel_err(t.grad_of(vw), finite_diff(w, eval)) < 1e-5);
  CHECK(rel_err(t.grad_of(vb), finite_diff(b, eval)) < 1e-5);
}

TEST_CASE("backward basics: sum, detach, scalar contract") {
  Tape<double> t;
  auto x = t.leaf(Tensor<double>::full({2, 3}, 2.0));
  auto loss = sum(x);
  t.backward(loss);
  for (int64_t i = 0; i < 6; ++i) CHECK(t.grad_of(x)[i] == 1.0);

  Tape<double> t2;
  auto y = t2.leaf(Tensor<double>({2}, {1.0, -2.0}));
  auto d = t2.detach(y);
  CHECK(d.value().v == y.value().v);  // bit-identical forward
  t2.backward(sum(d));
  CHECK(t2.grad_of(y)[0] == 0.0);
  CHECK(t2.grad_of(y)[1] == 0.0);

  Tape<double> t3;
  auto z = t3.leaf(Tensor<double>({2}, {1.0, 2.0}));
  CHECK_THROWS_AS(t3.backward(z), std::runtime_error);
}

TEST_CASE("gradient accumulation is deterministic across identical runs") {
  Rng rng(3);
  Tensor<double> x = random_tensor({4, 4}, rng);
  auto run = [&]() {
    Tape<double> t;
    auto vx = t.leaf(x);
    auto out = add(mul(vx, vx), scale(vx, 0.5));
    t.backward(mean(out));
    return t.grad_of(vx);
  };
  auto g1 = run(), g2 = run();
  CHECK(g1.v == g2.v);
}

TEST_CASE("softmax, sigmoid, smooth_l1, focal gradients") {
  Rng rng(17);
  Tensor<double> x = random_tensor({3, 5}, rng);
  Tensor<double> r = random_tensor({3, 5}, rng);

  auto eval_sm = [&]() {
    Tape<double> t;
    return sum(mul(softmax_rows(t.leaf(x, false)), t.constant(r))).value()[0];
  };
  {
    Tape<double> t;
    auto vx = t.leaf(x);
    t.backward(sum(mul(softmax_rows(vx), t.constant(r))));
    CHECK(rel_err(t.grad_of(vx), finite_diff(x, eval_sm)) < 1e-6);
  }

  auto eval_sig = [&]() {
    Tape<double> t;
    return sum(mul(sigmoid(t.leaf(x, false)), t.constant(r))).value()[0];
  };
  {
    Tape<double> t;
    auto vx = t.leaf(x);
    t.backward(sum(mul(sigmoid(vx), t.constant(r))));
    CHECK(rel_err(t.grad_of(vx), finite_diff(x, eval_sig)) < 1e-6);
  }

  auto eval_sl = [&]() {
    Tape<double> t;
    return sum(mul(smooth_l1(t.leaf(x, false), 1.0), t.constant(r))).value()[0];
  };
  {
    Tape<double> t;
    auto vx = t.leaf(x);
    t.backward(sum(mul(smooth_l1(vx, 1.0), t.constant(r))));
    CHECK(rel_err(t.grad_of(vx), finite_diff(x, eval_sl)) < 1e-5);
  }

  Tensor<double> targets({3, 5});
  Rng trng(5);
  for (int64_t i = 0; i < targets.size(); ++i) targets[i] = trng.uniform() < 0.3 ? 1.0 : 0.0;
  auto eval_focal = [&]() {
    Tape<double> t;
    return sum(focal_bce(t.leaf(x, false), targets, 0.25, 2.0)).value()[0];
  };
  {
    Tape<double> t;
    auto vx = t.leaf(x);
    t.backward(sum(focal_bce(vx, targets, 0.25, 2.0)));
    CHECK(rel_err(t.grad_of(vx), finite_diff(x, eval_focal)) < 1e-5);
  }
}

TEST_CASE("gather and concat round data correctly") {
  Tape<double> t;
  auto x = t.leaf(Tensor<double>({3, 2}, {1, 2, 3, 4, 5, 6}));
  auto g = gather_rows(x, {2, 0, 2});
  CHECK(g.value().v == std::vector<double>{5, 6, 1, 2, 5, 6});
  t.backward(sum(g));
  CHECK(t.grad_of(x).v == std::vector<double>{1, 1, 0, 0, 2, 2});

  Tape<double> t2;
  auto a = t2.leaf(Tensor<double>({1, 2}, {1, 2}));
  auto b = t2.leaf(Tensor<double>({2, 2}, {3, 4, 5, 6}));
  auto c = concat0<double>({a, b});
  CHECK(c.value().v == std::vector<double>{1, 2, 3, 4, 5, 6});
  t2.backward(sum(mul(c, c)));
  CHECK(t2.grad_of(a).v == std::vector<double>{2, 4});
  CHECK(t2.grad_of(b).v == std::vector<double>{6, 8, 10, 12});
}
