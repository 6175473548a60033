#pragma once

#include <cstdint>
#include <stdexcept>
#include <vector>

#include "mapfuse/ops.hpp"
#include "mapfuse/scan.hpp"
#include "mapfuse/ssm.hpp"
#include "mapfuse/tape.hpp"

namespace mapfuse {

enum class ScanSet { kSingle, kHorizontal, kVertical, kMulti };

inline const char* to_string(ScanSet s) {
  switch (s) {
    case ScanSet::kSingle: return "single";
    case ScanSet::kHorizontal: return "horizontal";
    case ScanSet::kVertical: return "vertical";
    case ScanSet::kMulti: return "multi";
  }
  return "?";
}

inline std::vector<ScanDirection> scan_directions(ScanSet s) {
  switch (s) {
    case ScanSet::kSingle: return {ScanDirection::kRight};
    case ScanSet::kHorizontal: return {ScanDirection::kRight, ScanDirection::kLeft};
    case ScanSet::kVertical: return {ScanDirection::kDown, ScanDirection::kUp};
    case ScanSet::kMulti:
      return {ScanDirection::kRight, ScanDirection::kLeft, ScanDirection::kDown,
              ScanDirection::kUp};
  }
  return {ScanDirection::kRight};
}

template <class T>
struct BevFusionVars {
  Var<T> conv_w, conv_b;    // [(n_hist+1)*C -> C], 3x3
  Var<T> ln_gain, ln_bias;  // [C]
  std::vector<GssVars<T>> dir_gss;  // one per direction, or a single shared set
};

// Concat aligned history with the current feature, conv + per-cell channel
// layernorm, then one gated state space branch per scan direction; the
// refined feature is the average over direction reconstructions.
template <class T>
Var<T> fuse_bev(const std::vector<Var<T>>& warped_window, Var<T> f_t, const BevFusionVars<T>& p,
                const std::vector<ScanDirection>& dirs, SsmMode mode) {
  const Shape& fs = f_t.shape();
  if (fs.size() != 3) throw std::invalid_argument("fuse_bev: rank-3 current feature required");
  for (const auto& wv : warped_window)
    if (wv.shape() != fs) throw std::invalid_argument("fuse_bev: geometry mismatch in window");
  const int64_t h = fs[1], w = fs[2];

  std::vector<Var<T>> cat = warped_window;
  cat.push_back(f_t);
  Var<T> f_c = cat.size() == 1 ? f_t : concat0(cat);
  Var<T> conv_out = conv2d(f_c, p.conv_w, p.conv_b);
  Var<T> seq = scan_bev(conv_out, ScanDirection::kRight);
  Var<T> seq_ln = layernorm(seq, p.ln_gain, p.ln_bias);
  Var<T> f_f = unscan_bev(seq_ln, ScanDirection::kRight, h, w);

  std::vector<Var<T>> recon;
  recon.reserve(dirs.size());
  for (size_t i = 0; i < dirs.size(); ++i) {
    const GssVars<T>& gss = p.dir_gss.size() == 1 ? p.dir_gss[0] : p.dir_gss[i];
    Var<T> s = scan_bev(f_f, dirs[i]);
    Var<T> o = gss_block(s, gss, mode);
    recon.push_back(unscan_bev(o, dirs[i], h, w));
  }
  return pairwise_mean(std::move(recon));
}

}  // namespace mapfuse
