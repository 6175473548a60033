#pragma once

#include <cmath>
#include <cstdint>
#include <stdexcept>

#include "mapfuse/ops.hpp"
#include "mapfuse/tape.hpp"
#include "mapfuse/tensor.hpp"

namespace mapfuse {

// 2-D rigid ego pose in the world frame. yaw in (-pi, pi].
struct Pose {
  double x = 0.0;
  double y = 0.0;
  double yaw = 0.0;
};

// p' = R(theta) p + t, stored as cos/sin plus translation.
struct Rigid2 {
  double c = 1.0, s = 0.0, tx = 0.0, ty = 0.0;

  void apply(double px, double py, double& ox, double& oy) const {
    ox = c * px - s * py + tx;
    oy = s * px + c * py + ty;
  }
  bool is_identity(double tol = 1e-12) const {
    return std::abs(c - 1.0) <= tol && std::abs(s) <= tol && std::abs(tx) <= tol &&
           std::abs(ty) <= tol;
  }
};

inline Rigid2 ego_to_world(const Pose& p) {
  return {std::cos(p.yaw), std::sin(p.yaw), p.x, p.y};
}

inline Rigid2 inverse(const Rigid2& t) {
  // R^T, -R^T t
  return {t.c, -t.s, -(t.c * t.tx + t.s * t.ty), -(-t.s * t.tx + t.c * t.ty)};
}

// a then b is compose(b, a); compose applies rhs first.
inline Rigid2 compose(const Rigid2& lhs, const Rigid2& rhs) {
  Rigid2 r;
  r.c = lhs.c * rhs.c - lhs.s * rhs.s;
  r.s = lhs.s * rhs.c + lhs.c * rhs.s;
  lhs.apply(rhs.tx, rhs.ty, r.tx, r.ty);
  return r;
}

// Sampling map for warping a frame-src feature into frame-dst: takes points
// expressed in dst coordinates to src coordinates (inverse-warp convention).
inline Rigid2 relative_transform(const Pose& src, const Pose& dst) {
  return compose(inverse(ego_to_world(src)), ego_to_world(dst));
}

// Metric extents of the BEV grid: x in [-x_max, x_max] over W columns,
// y in [-y_max, y_max] over H rows, cell centers sampled mid-cell.
struct GridGeometry {
  int64_t h = 50;
  int64_t w = 100;
  double x_max = 30.0;
  double y_max = 15.0;

  double cell_w() const { return 2.0 * x_max / static_cast<double>(w); }
  double cell_h() const { return 2.0 * y_max / static_cast<double>(h); }
  double col_to_x(double j) const { return -x_max + (j + 0.5) * cell_w(); }
  double row_to_y(double i) const { return -y_max + (i + 0.5) * cell_h(); }
  double x_to_col(double x) const { return (x + x_max) / cell_w() - 0.5; }
  double y_to_row(double y) const { return (y + y_max) / cell_h() - 0.5; }

  bool operator==(const GridGeometry& o) const {
    return h == o.h && w == o.w && x_max == o.x_max && y_max == o.y_max;
  }
};

namespace detail {

struct BilinearTap {
  int64_t i0, j0;
  double wy, wx;  // fractional offsets
  bool any;
};

inline BilinearTap bilinear_tap(const GridGeometry& g, double sx, double sy) {
  const double gj = g.x_to_col(sx);
  const double gi = g.y_to_row(sy);
  BilinearTap t;
  t.j0 = static_cast<int64_t>(std::floor(gj));
  t.i0 = static_cast<int64_t>(std::floor(gi));
  t.wx = gj - static_cast<double>(t.j0);
  t.wy = gi - static_cast<double>(t.i0);
  t.any = t.j0 >= -1 && t.j0 < g.w && t.i0 >= -1 && t.i0 < g.h;
  return t;
}

}  // namespace detail

// Inverse bilinear warp of F[C,H,W] by the sampling map (dst coords -> src
// coords). Out-of-bounds samples read zero. Differentiable in the values.
template <class T>
Tensor<T> warp_values(const Tensor<T>& f, const GridGeometry& g, const Rigid2& map) {
  if (f.rank() != 3 || f.shape[1] != g.h || f.shape[2] != g.w)
    throw std::invalid_argument("warp: feature does not match grid geometry");
  if (map.is_identity()) return f;
  const int64_t c = f.shape[0], h = g.h, w = g.w, hw = h * w;
  Tensor<T> out({c, h, w});
  for (int64_t i = 0; i < h; ++i)
    for (int64_t j = 0; j < w; ++j) {
      double sx, sy;
      map.apply(g.col_to_x(static_cast<double>(j)), g.row_to_y(static_cast<double>(i)), sx, sy);
      const auto tap = detail::bilinear_tap(g, sx, sy);
      if (!tap.any) continue;
      for (int64_t dy = 0; dy <= 1; ++dy)
        for (int64_t dx = 0; dx <= 1; ++dx) {
          const int64_t si = tap.i0 + dy, sj = tap.j0 + dx;
          if (si < 0 || si >= h || sj < 0 || sj >= w) continue;
          const double wgt = (dy ? tap.wy : 1.0 - tap.wy) * (dx ? tap.wx : 1.0 - tap.wx);
          if (wgt == 0.0) continue;
          for (int64_t cc = 0; cc < c; ++cc)
            out[cc * hw + i * w + j] += T(wgt) * f[cc * hw + si * w + sj];
        }
    }
  return out;
}

template <class T>
Var<T> warp(Var<T> f, const GridGeometry& g, const Rigid2& map) {
  Tape<T>& t = *f.tape;
  Tensor<T> out = warp_values(f.value(), g, map);
  bool req = t.wants_grad(f.id);
  const int64_t c = f.shape()[0], h = g.h, w = g.w, hw = h * w;
  int32_t id = t.new_node(std::move(out), req);
  if (req) {
    int32_t fi = f.id;
    t.set_back(id, [=](Tape<T>& tp) {
      const Tensor<T>& gr = tp.grad_buf(id);
      Tensor<T>& gf = tp.grad_buf(fi);
      if (map.is_identity()) {
        for (int64_t i = 0; i < gr.size(); ++i) gf[i] += gr[i];
        return;
      }
      for (int64_t i = 0; i < h; ++i)
        for (int64_t j = 0; j < w; ++j) {
          double sx, sy;
          map.apply(g.col_to_x(static_cast<double>(j)), g.row_to_y(static_cast<double>(i)), sx,
                    sy);
          const auto tap = detail::bilinear_tap(g, sx, sy);
          if (!tap.any) continue;
          for (int64_t dy = 0; dy <= 1; ++dy)
            for (int64_t dx = 0; dx <= 1; ++dx) {
              const int64_t si = tap.i0 + dy, sj = tap.j0 + dx;
              if (si < 0 || si >= h || sj < 0 || sj >= w) continue;
              const double wgt = (dy ? tap.wy : 1.0 - tap.wy) * (dx ? tap.wx : 1.0 - tap.wx);
              if (wgt == 0.0) continue;
              for (int64_t cc = 0; cc < c; ++cc)
                gf[cc * hw + si * w + sj] += T(wgt) * gr[cc * hw + i * w + j];
            }
        }
    });
  }
  return {&t, id};
}

}  // namespace mapfuse
