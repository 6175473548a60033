#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

#include "mapfuse/ops.hpp"
#include "mapfuse/tape.hpp"
#include "mapfuse/tensor.hpp"

namespace mapfuse {

enum class ScanDirection { kRight, kLeft, kDown, kUp };

inline const char* to_string(ScanDirection d) {
  switch (d) {
    case ScanDirection::kRight: return "right";
    case ScanDirection::kLeft: return "left";
    case ScanDirection::kDown: return "down";
    case ScanDirection::kUp: return "up";
  }
  return "?";
}

constexpr ScanDirection kAllDirections[4] = {ScanDirection::kRight, ScanDirection::kLeft,
                                             ScanDirection::kDown, ScanDirection::kUp};

// Sequence position l -> flat spatial cell (h*W + w). right is row-major,
// down is column-major, left/up are their reversals.
inline std::vector<int64_t> bev_scan_order(int64_t h, int64_t w, ScanDirection dir) {
  const int64_t hw = h * w;
  std::vector<int64_t> order(static_cast<size_t>(hw));
  switch (dir) {
    case ScanDirection::kRight:
      for (int64_t l = 0; l < hw; ++l) order[l] = l;
      break;
    case ScanDirection::kLeft:
      for (int64_t l = 0; l < hw; ++l) order[l] = hw - 1 - l;
      break;
    case ScanDirection::kDown:
      for (int64_t x = 0; x < w; ++x)
        for (int64_t y = 0; y < h; ++y) order[x * h + y] = y * w + x;
      break;
    case ScanDirection::kUp:
      for (int64_t x = 0; x < w; ++x)
        for (int64_t y = 0; y < h; ++y) order[hw - 1 - (x * h + y)] = y * w + x;
      break;
  }
  return order;
}

// F[C,H,W] -> S[(H*W), C] along the given traversal.
template <class T>
Tensor<T> scan_bev_values(const Tensor<T>& f, ScanDirection dir) {
  if (f.rank() != 3) throw std::invalid_argument("scan_bev: rank-3 input required");
  const int64_t c = f.shape[0], h = f.shape[1], w = f.shape[2];
  const int64_t hw = h * w;
  auto order = bev_scan_order(h, w, dir);
  Tensor<T> s({hw, c});
  for (int64_t l = 0; l < hw; ++l) {
    const int64_t cell = order[l];
    for (int64_t cc = 0; cc < c; ++cc) s[l * c + cc] = f[cc * hw + cell];
  }
  return s;
}

// Exact inverse of scan_bev_values.
template <class T>
Tensor<T> unscan_bev_values(const Tensor<T>& s, ScanDirection dir, int64_t h, int64_t w) {
  if (s.rank() != 2) throw std::invalid_argument("unscan_bev: rank-2 input required");
  const int64_t hw = h * w;
  if (s.shape[0] != hw)
    throw std::invalid_argument("unscan_bev: sequence length " + std::to_string(s.shape[0]) +
                                " != H*W = " + std::to_string(hw));
  const int64_t c = s.shape[1];
  auto order = bev_scan_order(h, w, dir);
  Tensor<T> f({c, h, w});
  for (int64_t l = 0; l < hw; ++l) {
    const int64_t cell = order[l];
    for (int64_t cc = 0; cc < c; ++cc) f[cc * hw + cell] = s[l * c + cc];
  }
  return f;
}

template <class T>
Var<T> scan_bev(Var<T> f, ScanDirection dir) {
  Tape<T>& t = *f.tape;
  const Shape fs = f.shape();
  Tensor<T> out = scan_bev_values(f.value(), dir);
  const int64_t c = fs[0], h = fs[1], w = fs[2], hw = h * w;
  bool req = t.wants_grad(f.id);
  int32_t id = t.new_node(std::move(out), req);
  if (req) {
    int32_t fi = f.id;
    t.set_back(id, [=](Tape<T>& tp) {
      const Tensor<T>& g = tp.grad_buf(id);
      Tensor<T>& gf = tp.grad_buf(fi);
      auto order = bev_scan_order(h, w, dir);
      for (int64_t l = 0; l < hw; ++l) {
        const int64_t cell = order[l];
        for (int64_t cc = 0; cc < c; ++cc) gf[cc * hw + cell] += g[l * c + cc];
      }
    });
  }
  return {&t, id};
}

template <class T>
Var<T> unscan_bev(Var<T> s, ScanDirection dir, int64_t h, int64_t w) {
  Tape<T>& t = *s.tape;
  Tensor<T> out = unscan_bev_values(s.value(), dir, h, w);
  const int64_t c = s.shape()[1], hw = h * w;
  bool req = t.wants_grad(s.id);
  int32_t id = t.new_node(std::move(out), req);
  if (req) {
    int32_t si = s.id;
    t.set_back(id, [=](Tape<T>& tp) {
      const Tensor<T>& g = tp.grad_buf(id);
      Tensor<T>& gs = tp.grad_buf(si);
      auto order = bev_scan_order(h, w, dir);
      for (int64_t l = 0; l < hw; ++l) {
        const int64_t cell = order[l];
        for (int64_t cc = 0; cc < c; ++cc) gs[l * c + cc] += g[cc * hw + cell];
      }
    });
  }
  return {&t, id};
}

// ---- instance sequence layouts ---------------------------------------------

enum class InstanceLayout { kInstanceFirst, kTemporalFirst };

inline const char* to_string(InstanceLayout l) {
  return l == InstanceLayout::kInstanceFirst ? "instance_first" : "temporal_first";
}

// Sequence position -> row of the stacked window [(N+1)*N_q, D], where the
// window rows are frames oldest..current, each N_q queries.
inline std::vector<int64_t> instance_sequence_order(int64_t n_hist, int64_t n_q,
                                                    InstanceLayout layout) {
  const int64_t frames = n_hist + 1;
  std::vector<int64_t> order(static_cast<size_t>(frames * n_q));
  if (layout == InstanceLayout::kInstanceFirst) {
    for (int64_t i = 0; i < frames * n_q; ++i) order[i] = i;
  } else {
    for (int64_t m = 0; m < n_q; ++m)
      for (int64_t f = 0; f < frames; ++f) order[m * frames + f] = f * n_q + m;
  }
  return order;
}

// Positions of the current frame's queries within the laid-out sequence,
// ordered by query index.
inline std::vector<int64_t> current_frame_positions(int64_t n_hist, int64_t n_q,
                                                    InstanceLayout layout) {
  std::vector<int64_t> pos(static_cast<size_t>(n_q));
  if (layout == InstanceLayout::kInstanceFirst) {
    for (int64_t m = 0; m < n_q; ++m) pos[m] = n_hist * n_q + m;
  } else {
    for (int64_t m = 0; m < n_q; ++m) pos[m] = m * (n_hist + 1) + n_hist;
  }
  return pos;
}

// window: query sets ordered oldest -> current (current last). All frames
// must agree on [N_q, D].
template <class T>
Var<T> build_instance_sequence(const std::vector<Var<T>>& window, InstanceLayout layout) {
  if (window.empty()) throw std::invalid_argument("build_instance_sequence: empty window");
  const Shape& s0 = window[0].shape();
  for (const auto& f : window)
    if (f.shape() != s0)
      throw std::invalid_argument("build_instance_sequence: ragged window");
  const int64_t n_hist = static_cast<int64_t>(window.size()) - 1;
  const int64_t n_q = s0[0];
  Var<T> stacked = concat0(window);
  if (layout == InstanceLayout::kInstanceFirst) return stacked;
  return gather_rows(stacked, instance_sequence_order(n_hist, n_q, layout));
}

template <class T>
Tensor<T> build_instance_sequence_values(const std::vector<Tensor<T>>& window,
                                         InstanceLayout layout) {
  if (window.empty()) throw std::invalid_argument("build_instance_sequence: empty window");
  const Shape& s0 = window[0].shape;
  for (const auto& f : window)
    if (f.shape != s0) throw std::invalid_argument("build_instance_sequence: ragged window");
  const int64_t n_hist = static_cast<int64_t>(window.size()) - 1;
  const int64_t n_q = s0[0], d = s0[1];
  auto order = instance_sequence_order(n_hist, n_q, layout);
  Tensor<T> out({(n_hist + 1) * n_q, d});
  for (size_t p = 0; p < order.size(); ++p) {
    const int64_t src = order[p];
    const int64_t frame = src / n_q, row = src % n_q;
    std::copy_n(window[static_cast<size_t>(frame)].data() + row * d, d,
                out.data() + static_cast<int64_t>(p) * d);
  }
  return out;
}

}  // namespace mapfuse
