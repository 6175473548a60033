#pragma once

#include <cmath>
#include <cstdint>
#include <limits>
#include <stdexcept>
#include <vector>

namespace mapfuse {

// Symmetric Chamfer distance between point sets given as (x,y) pairs:
// average of the two directed mean nearest-neighbor distances.
template <class T>
double chamfer_distance(const T* a, int64_t na, const T* b, int64_t nb) {
  if (na < 1 || nb < 1) throw std::invalid_argument("chamfer: empty point set");
  auto directed = [](const T* p, int64_t np, const T* q, int64_t nq) {
    double acc = 0.0;
    for (int64_t i = 0; i < np; ++i) {
      const double px = static_cast<double>(p[2 * i]);
      const double py = static_cast<double>(p[2 * i + 1]);
      double best = std::numeric_limits<double>::infinity();
      for (int64_t j = 0; j < nq; ++j) {
        const double dx = px - static_cast<double>(q[2 * j]);
        const double dy = py - static_cast<double>(q[2 * j + 1]);
        best = std::min(best, dx * dx + dy * dy);
      }
      acc += std::sqrt(best);
    }
    return acc / static_cast<double>(np);
  };
  return 0.5 * (directed(a, na, b, nb) + directed(b, nb, a, na));
}

// Arc-length-uniform resampling of a polyline to exactly p points, endpoints
// preserved. Input and output are (x,y) pairs.
inline std::vector<double> resample_polyline(const std::vector<double>& pts, int64_t p) {
  const int64_t n = static_cast<int64_t>(pts.size()) / 2;
  if (n < 2) throw std::invalid_argument("resample: polyline needs >= 2 points");
  if (p < 2) throw std::invalid_argument("resample: target point count must be >= 2");
  std::vector<double> cum(static_cast<size_t>(n), 0.0);
  for (int64_t i = 1; i < n; ++i) {
    const double dx = pts[2 * i] - pts[2 * (i - 1)];
    const double dy = pts[2 * i + 1] - pts[2 * (i - 1) + 1];
    cum[static_cast<size_t>(i)] = cum[static_cast<size_t>(i - 1)] + std::hypot(dx, dy);
  }
  const double total = cum.back();
  std::vector<double> out(static_cast<size_t>(2 * p));
  int64_t seg = 0;
  for (int64_t k = 0; k < p; ++k) {
    const double target =
        total * static_cast<double>(k) / static_cast<double>(p - 1);
    while (seg < n - 2 && cum[static_cast<size_t>(seg + 1)] < target) ++seg;
    const double seg_len = cum[static_cast<size_t>(seg + 1)] - cum[static_cast<size_t>(seg)];
    const double t = seg_len > 0.0 ? (target - cum[static_cast<size_t>(seg)]) / seg_len : 0.0;
    out[static_cast<size_t>(2 * k)] = pts[2 * seg] + t * (pts[2 * (seg + 1)] - pts[2 * seg]);
    out[static_cast<size_t>(2 * k + 1)] =
        pts[2 * seg + 1] + t * (pts[2 * (seg + 1) + 1] - pts[2 * seg + 1]);
  }
  return out;
}

// Total arc length of an (x,y)-pair polyline.
inline double polyline_length(const std::vector<double>& pts) {
  double acc = 0.0;
  for (size_t i = 2; i + 1 < pts.size(); i += 2)
    acc += std::hypot(pts[i] - pts[i - 2], pts[i + 1] - pts[i - 1]);
  return acc;
}

}  // namespace mapfuse
