#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <complex>

#include "mapfuse/ssm.hpp"
#include "testutil.hpp"

using namespace mapfuse;
using namespace mapfuse::test;

namespace {

template <class T>
DssVars<T> bind_dss(Tape<T>& t, DssParams<T>& p, bool trainable = true) {
  return DssVars<T>{t.leaf(p.r, trainable),      t.leaf(p.lam_im, trainable),
                    t.leaf(p.log_dt, trainable), t.leaf(p.w_re, trainable),
                    t.leaf(p.w_im, trainable),   t.leaf(p.d_skip, trainable)};
}

template <class T>
GssVars<T> bind_gss(Tape<T>& t, GssParams<T>& p, bool trainable = true) {
  return GssVars<T>{t.leaf(p.w_v, trainable), t.leaf(p.w_u, trainable), t.leaf(p.w_y, trainable),
                    t.leaf(p.w_o, trainable), bind_dss(t, p.dss, trainable)};
}

}  // namespace

TEST_CASE("linear scan trivial coefficient cases") {
  {
    std::vector<double> a(8, 0.0), b{1, 2, 3, 4, 5, 6, 7, 8};
    parallel_linear_scan(a.data(), b.data(), 8);
    CHECK(b == std::vector<double>{1, 2, 3, 4, 5, 6, 7, 8});
  }
  {
    std::vector<double> a(9, 1.0), b(9, 1.0);
    parallel_linear_scan(a.data(), b.data(), 9);
    for (int64_t k = 0; k < 9; ++k) CHECK(b[static_cast<size_t>(k)] == double(k + 1));
  }
}

TEST_CASE("complex scan matches sequential fold on random length-1024 input") {
  Rng rng(21);
  const int64_t len = 1024;
  std::vector<double> ar(len), ai(len), br(len), bi(len);
  for (int64_t k = 0; k < len; ++k) {
    // keep |a| < 1 so the recurrence stays bounded
    ar[k] = rng.uniform(-0.7, 0.7);
    ai[k] = rng.uniform(-0.7, 0.7);
    br[k] = rng.normal();
    bi[k] = rng.normal();
  }
  std::vector<double> fr = br, fi = bi;
  linear_recurrence_fold(ar.data(), ai.data(), fr.data(), fi.data(), len);
  std::vector<double> sar = ar, sai = ai, sbr = br, sbi = bi;
  parallel_linear_scan(sar.data(), sai.data(), sbr.data(), sbi.data(), len);
  double md = 0.0;
  for (int64_t k = 0; k < len; ++k)
    md = std::max({md, std::abs(fr[k] - sbr[k]), std::abs(fi[k] - sbi[k])});
  CHECK(md < 1e-10);
}

TEST_CASE("dss with zero output weights reduces to the skip path exactly") {
  Rng rng(3);
  DssParams<double> p = DssParams<double>::init(4, 8, rng);
  p.w_re.fill(0.0);
  p.w_im.fill(0.0);
  for (int64_t h = 0; h < 4; ++h) p.d_skip[h] = 0.5 + 0.25 * double(h);
  Tensor<double> u = random_tensor({16, 4}, rng);
  Tape<double> t;
  auto y = dss_apply(t.leaf(u, false), bind_dss(t, p, false));
  for (int64_t k = 0; k < 16; ++k)
    for (int64_t h = 0; h < 4; ++h)
      CHECK(y.value().at(k, h) == u.at(k, h) * p.d_skip[h]);
}

TEST_CASE("dss single step matches a direct hand recurrence") {
  Rng rng(5);
  DssParams<double> p = DssParams<double>::init(2, 6, rng);
  Tensor<double> u = random_tensor({1, 2}, rng);
  Tape<double> t;
  auto y = dss_apply(t.leaf(u, false), bind_dss(t, p, false));

  for (int64_t h = 0; h < 2; ++h) {
    // independent oracle in std::complex arithmetic
    const double dt = std::exp(p.log_dt[h]);
    std::complex<double> acc(0.0, 0.0);
    for (int64_t j = 0; j < 6; ++j) {
      const std::complex<double> lam(-std::exp(p.r.at(h, j)), p.lam_im.at(h, j));
      const std::complex<double> a = std::exp(dt * lam);
      const std::complex<double> b = (a - 1.0) / lam;
      const std::complex<double> w(p.w_re.at(h, j), p.w_im.at(h, j));
      acc += w * b;  // x_1 = b * u_1
    }
    const double want = acc.real() * u.at(0, h) + p.d_skip[h] * u.at(0, h);
    CHECK(y.value().at(0, h) == doctest::Approx(want).epsilon(1e-12));
  }
}

TEST_CASE("dss empty sequence is rejected") {
  Rng rng(9);
  DssParams<double> p = DssParams<double>::init(2, 4, rng);
  Tape<double> t;
  Tensor<double> u({0, 2});
  CHECK_THROWS_AS(dss_apply(t.leaf(u, false), bind_dss(t, p, false)), std::invalid_argument);
}

TEST_CASE("dss evaluation modes agree: recurrence is the oracle") {
  Rng rng(31);
  DssParams<double> p = DssParams<double>::init(3, 16, rng);
  Tensor<double> u = random_tensor({256, 3}, rng);
  Tape<double> t;
  auto ur = t.leaf(u, false);
  auto dv = bind_dss(t, p, false);
  auto y_rec = dss_apply(ur, dv, SsmMode::kRecurrence);
  auto y_scan = dss_apply(ur, dv, SsmMode::kScan);
  auto y_ker = dss_apply(ur, dv, SsmMode::kKernel);
  CHECK(max_abs_diff(y_rec.value(), y_scan.value()) < 1e-10);
  CHECK(max_abs_diff(y_rec.value(), y_ker.value()) < 1e-8);
}

TEST_CASE("dss causality: a future perturbation leaves the past bit-identical") {
  Rng rng(41);
  DssParams<double> p = DssParams<double>::init(2, 8, rng);
  Tensor<double> u = random_tensor({64, 2}, rng);
  Tensor<double> u2 = u;
  u2.at(40, 0) += 3.0;
  u2.at(40, 1) -= 2.0;
  for (SsmMode mode : {SsmMode::kRecurrence, SsmMode::kScan, SsmMode::kKernel}) {
    Tape<double> t;
    auto dv = bind_dss(t, p, false);
    auto y1 = dss_apply(t.leaf(u, false), dv, mode);
    auto y2 = dss_apply(t.leaf(u2, false), dv, mode);
    for (int64_t k = 0; k < 40; ++k)
      for (int64_t h = 0; h < 2; ++h) CHECK(y1.value().at(k, h) == y2.value().at(k, h));
    bool differs = false;
    for (int64_t k = 40; k < 64; ++k)
      for (int64_t h = 0; h < 2; ++h) differs = differs || y1.value().at(k, h) != y2.value().at(k, h);
    CHECK(differs);
  }
}

TEST_CASE("dss stability bound on bounded inputs") {
  for (uint64_t seed : {1ull, 2ull, 3ull, 4ull}) {
    Rng rng(seed);
    const int64_t n = 16;
    DssParams<double> p = DssParams<double>::init(4, n, rng);
    Tensor<double> u({2048, 4});
    for (int64_t i = 0; i < u.size(); ++i) u[i] = rng.uniform(-1.0, 1.0);
    Tape<double> t;
    auto y = dss_apply(t.leaf(u, false), bind_dss(t, p, false));
    double wmax = 0.0, dmax = 0.0, ymax = 0.0;
    for (int64_t h = 0; h < 4; ++h) {
      dmax = std::max(dmax, std::abs(p.d_skip[h]));
      for (int64_t j = 0; j < n; ++j)
        wmax = std::max(wmax, std::hypot(p.w_re.at(h, j), p.w_im.at(h, j)));
    }
    for (int64_t i = 0; i < y.value().size(); ++i) ymax = std::max(ymax, std::abs(y.value()[i]));
    CHECK(ymax <= 10.0 * (wmax * double(n) + dmax));
  }
}

TEST_CASE("dss gradients match finite differences") {
  Rng rng(51);
  const int64_t len = 12, ch = 2, n = 4;
  DssParams<double> p = DssParams<double>::init(ch, n, rng);
  Tensor<double> u = random_tensor({len, ch}, rng);
  Tensor<double> r = random_tensor({len, ch}, rng);

  auto eval = [&]() {
    Tape<double> t;
    DssParams<double>& pp = p;
    auto dv = bind_dss(t, pp, false);
    return sum(mul(dss_apply(t.leaf(u, false), dv), t.constant(r))).value()[0];
  };

  Tape<double> t;
  auto vu = t.leaf(u);
  auto dv = bind_dss(t, p);
  t.backward(sum(mul(dss_apply(vu, dv), t.constant(r))));

  CHECK(rel_err(t.grad_of(vu), finite_diff(u, eval)) < 1e-5);
  CHECK(rel_err(t.grad_of(dv.r), finite_diff(p.r, eval)) < 1e-5);
  CHECK(rel_err(t.grad_of(dv.lam_im), finite_diff(p.lam_im, eval)) < 1e-5);
  CHECK(rel_err(t.grad_of(dv.log_dt), finite_diff(p.log_dt, eval)) < 1e-5);
  CHECK(rel_err(t.grad_of(dv.w_re), finite_diff(p.w_re, eval)) < 1e-5);
  CHECK(rel_err(t.grad_of(dv.w_im), finite_diff(p.w_im, eval)) < 1e-5);
  CHECK(rel_err(t.grad_of(dv.d_skip), finite_diff(p.d_skip, eval)) < 1e-5);
}

TEST_CASE("gss block with zero output projection is the identity map") {
  Rng rng(61);
  GssParams<double> p = GssParams<double>::init(8, 0.5, 4.0, 8, rng);
  p.w_o.fill(0.0);
  Tensor<double> s = random_tensor({32, 8}, rng);
  Tape<double> t;
  auto o = gss_block(t.leaf(s, false), bind_gss(t, p, false));
  CHECK(o.value().v == s.v);
}

TEST_CASE("gss block shape contract") {
  Rng rng(71);
  for (int64_t c : {8, 32}) {
    GssParams<double> p = GssParams<double>::init(c, 0.5, 4.0, 4, rng);
    for (int64_t len : {int64_t(1), int64_t(7), int64_t(5000)}) {
      Tensor<double> s = random_tensor({len, c}, rng, 0.1);
      Tape<double> t;
      auto o = gss_block(t.leaf(s, false), bind_gss(t, p, false));
      CHECK(o.shape() == Shape{len, c});
    }
  }
  GssParams<double> p8 = GssParams<double>::init(8, 0.5, 4.0, 4, rng);
  Tensor<double> bad = random_tensor({4, 6}, rng);
  Tape<double> t;
  CHECK_THROWS_AS(gss_block(t.leaf(bad, false), bind_gss(t, p8, false)), std::invalid_argument);
}

TEST_CASE("gss end-to-end gradient vs finite differences") {
  Rng rng(81);
  const int64_t c = 6, len = 9;
  GssParams<double> p = GssParams<double>::init(c, 0.5, 2.0, 3, rng);
  Tensor<double> s = random_tensor({len, c}, rng, 0.5);

  auto eval = [&]() {
    Tape<double> t;
    return mean(gss_block(t.leaf(s, false), bind_gss(t, p, false))).value()[0];
  };

  Tape<double> t;
  auto vs = t.leaf(s);
  auto gv = bind_gss(t, p);
  t.backward(mean(gss_block(vs, gv)));

  CHECK(rel_err(t.grad_of(vs), finite_diff(s, eval)) < 1e-4);
  CHECK(rel_err(t.grad_of(gv.w_v), finite_diff(p.w_v, eval)) < 1e-4);
  CHECK(rel_err(t.grad_of(gv.w_u), finite_diff(p.w_u, eval)) < 1e-4);
  CHECK(rel_err(t.grad_of(gv.w_y), finite_diff(p.w_y, eval)) < 1e-4);
  CHECK(rel_err(t.grad_of(gv.w_o), finite_diff(p.w_o, eval)) < 1e-4);
  CHECK(rel_err(t.grad_of(gv.dss.r), finite_diff(p.dss.r, eval)) < 1e-4);
  CHECK(rel_err(t.grad_of(gv.dss.lam_im), finite_diff(p.dss.lam_im, eval)) < 1e-4);
  CHECK(rel_err(t.grad_of(gv.dss.log_dt), finite_diff(p.dss.log_dt, eval)) < 1e-4);
  CHECK(rel_err(t.grad_of(gv.dss.w_re), finite_diff(p.dss.w_re, eval)) < 1e-4);
  CHECK(rel_err(t.grad_of(gv.dss.w_im), finite_diff(p.dss.w_im, eval)) < 1e-4);
  CHECK(rel_err(t.grad_of(gv.dss.d_skip), finite_diff(p.dss.d_skip, eval)) < 1e-4);
}

TEST_CASE("float instantiation compiles and runs") {
  Rng rng(91);
  GssParams<float> p = GssParams<float>::init(8, 0.5, 4.0, 4, rng);
  Tensor<float> s({16, 8});
  for (int64_t i = 0; i < s.size(); ++i) s[i] = float(rng.normal() * 0.1);
  Tape<float> t;
  auto o = gss_block(t.leaf(s, false), bind_gss(t, p, false));
  CHECK(o.shape() == Shape{16, 8});
}
