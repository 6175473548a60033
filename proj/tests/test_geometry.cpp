#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "mapfuse/geometry.hpp"
#include "testutil.hpp"

using namespace mapfuse;
using namespace mapfuse::test;

TEST_CASE("identical poses give the identity sampling map") {
  Pose p{3.0, -2.0, 0.7};
  Rigid2 t = relative_transform(p, p);
  CHECK(t.is_identity(1e-12));
}

TEST_CASE("pure forward motion translates content backward") {
  // ego advances 2 m along +x between src and dst
  Pose src{0.0, 0.0, 0.0};
  Pose dst{2.0, 0.0, 0.0};
  Rigid2 map = relative_transform(src, dst);
  // a point at the new ego origin was 2 m ahead of the old ego
  double sx, sy;
  map.apply(0.0, 0.0, sx, sy);
  CHECK(sx == doctest::Approx(2.0).epsilon(1e-12));
  CHECK(sy == doctest::Approx(0.0).epsilon(1e-12));
}

TEST_CASE("relative transforms compose") {
  Rng rng(3);
  for (int trial = 0; trial < 20; ++trial) {
    Pose a{rng.uniform(-10, 10), rng.uniform(-10, 10), rng.uniform(-3, 3)};
    Pose b{rng.uniform(-10, 10), rng.uniform(-10, 10), rng.uniform(-3, 3)};
    Pose c{rng.uniform(-10, 10), rng.uniform(-10, 10), rng.uniform(-3, 3)};
    Rigid2 ab = relative_transform(a, b);
    Rigid2 bc = relative_transform(b, c);
    Rigid2 ac = relative_transform(a, c);
    Rigid2 composed = compose(ab, bc);
    for (int k = 0; k < 5; ++k) {
      const double px = rng.uniform(-20, 20), py = rng.uniform(-20, 20);
      double x1, y1, x2, y2;
      composed.apply(px, py, x1, y1);
      ac.apply(px, py, x2, y2);
      CHECK(std::abs(x1 - x2) < 1e-12);
      CHECK(std::abs(y1 - y2) < 1e-12);
    }
  }
}

namespace {
const GridGeometry kGeom{10, 20, 10.0, 5.0};  // 1 m cells
}

TEST_CASE("identity warp is bit-equal to the input") {
  Rng rng(7);
  Tensor<double> f = random_tensor({3, kGeom.h, kGeom.w}, rng);
  Tensor<double> out = warp_values(f, kGeom, Rigid2{});
  CHECK(out.v == f.v);
}

TEST_CASE("one-cell-pitch translation shifts indices with a zero border") {
  // labeled ramp grid so every cell is identifiable
  Tensor<double> f({1, kGeom.h, kGeom.w});
  for (int64_t i = 0; i < kGeom.h; ++i)
    for (int64_t j = 0; j < kGeom.w; ++j) f.at(0, i, j) = double(i * 100 + j) + 1.0;

  // ego advances exactly one cell pitch: content shifts one column toward -x
  Pose src{0, 0, 0}, dst{kGeom.cell_w(), 0, 0};
  Tensor<double> out = warp_values(f, kGeom, relative_transform(src, dst));
  for (int64_t i = 0; i < kGeom.h; ++i) {
    for (int64_t j = 0; j < kGeom.w - 1; ++j)
      CHECK(out.at(0, i, j) == doctest::Approx(f.at(0, i, j + 1)).epsilon(1e-12));
    CHECK(out.at(0, i, kGeom.w - 1) == 0.0);
  }
}

TEST_CASE("180-degree rotation fixes a point-symmetric grid") {
  Tensor<double> f({1, kGeom.h, kGeom.w});
  for (int64_t i = 0; i < kGeom.h; ++i)
    for (int64_t j = 0; j < kGeom.w; ++j) {
      const double x = kGeom.col_to_x(double(j)), y = kGeom.row_to_y(double(i));
      f.at(0, i, j) = x * x + 3.0 * y * y + x * y;  // even under (x,y) -> (-x,-y)
    }
  Pose src{0, 0, 0}, dst{0, 0, M_PI};
  Tensor<double> out = warp_values(f, kGeom, relative_transform(src, dst));
  for (int64_t i = 1; i < kGeom.h - 1; ++i)
    for (int64_t j = 1; j < kGeom.w - 1; ++j)
      CHECK(out.at(0, i, j) == doctest::Approx(f.at(0, i, j)).epsilon(1e-6));
}

TEST_CASE("sub-cell translations approximately preserve mass") {
  Rng rng(11);
  Tensor<double> f({1, kGeom.h, kGeom.w});
  // interior support with >= 2 cells of zero margin
  for (int64_t i = 2; i < kGeom.h - 2; ++i)
    for (int64_t j = 2; j < kGeom.w - 2; ++j) f.at(0, i, j) = rng.uniform(0.5, 1.5);
  double mass = 0.0;
  for (int64_t i = 0; i < f.size(); ++i) mass += f[i];

  for (int trial = 0; trial < 10; ++trial) {
    Pose src{0, 0, 0};
    Pose dst{rng.uniform(-0.5, 0.5) * kGeom.cell_w(), rng.uniform(-0.5, 0.5) * kGeom.cell_h(), 0};
    Tensor<double> out = warp_values(f, kGeom, relative_transform(src, dst));
    double wmass = 0.0;
    for (int64_t i = 0; i < out.size(); ++i) wmass += out[i];
    CHECK(std::abs(wmass - mass) / mass < 0.02);
  }
}

TEST_CASE("warp is differentiable in the feature values") {
  Rng rng(13);
  const GridGeometry g{5, 6, 3.0, 2.5};
  Tensor<double> f = random_tensor({2, 5, 6}, rng);
  Tensor<double> r = random_tensor({2, 5, 6}, rng);
  Pose src{0.3, -0.2, 0.1}, dst{0.5, 0.1, 0.25};
  const Rigid2 map = relative_transform(src, dst);

  auto eval = [&]() {
    Tape<double> t;
    return sum(mul(warp(t.leaf(f, false), g, map), t.constant(r))).value()[0];
  };
  Tape<double> t;
  auto vf = t.leaf(f);
  t.backward(sum(mul(warp(vf, g, map), t.constant(r))));
  CHECK(rel_err(t.grad_of(vf), finite_diff(f, eval)) < 1e-6);
}

TEST_CASE("warp rejects geometry mismatch") {
  Tensor<double> f({1, 4, 4});
  CHECK_THROWS_AS(warp_values(f, kGeom, Rigid2{}), std::invalid_argument);
}
