#pragma once

#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <vector>

#include "mapfuse/hungarian.hpp"
#include "mapfuse/memory_bank.hpp"
#include "mapfuse/pointset.hpp"
#include "mapfuse/scan.hpp"
#include "mapfuse/ssm.hpp"

namespace mapfuse {

enum class MatchCostKind { kL2, kCosine, kChamfer };

inline const char* to_string(MatchCostKind k) {
  switch (k) {
    case MatchCostKind::kL2: return "l2";
    case MatchCostKind::kCosine: return "cosine";
    case MatchCostKind::kChamfer: return "chamfer";
  }
  return "?";
}

enum class InstanceScanSet { kSpatial, kTemporal, kBoth };

inline const char* to_string(InstanceScanSet s) {
  switch (s) {
    case InstanceScanSet::kSpatial: return "spatial";
    case InstanceScanSet::kTemporal: return "temporal";
    case InstanceScanSet::kBoth: return "spatial-temporal";
  }
  return "?";
}

// Pairwise matching cost between a historical and the current query set.
// Entry (n, m) compares historical query n with current query m. Cosine
// similarity is negated so the assignment solver minimizes; the Chamfer
// variant compares the regressed point sets attached to the query sets.
template <class T>
CostMatrix match_cost(const InstanceQuerySet<T>& hist, const InstanceQuerySet<T>& curr,
                      MatchCostKind kind = MatchCostKind::kL2) {
  const int64_t n_q = hist.queries.shape[0];
  const int64_t d = hist.queries.shape[1];
  if (curr.queries.shape != hist.queries.shape)
    throw std::invalid_argument("match_cost: query set width mismatch");
  CostMatrix c(n_q, n_q);
  switch (kind) {
    case MatchCostKind::kL2:
      for (int64_t n = 0; n < n_q; ++n)
        for (int64_t m = 0; m < n_q; ++m) {
          double acc = 0.0;
          const T* qa = hist.queries.data() + n * d;
          const T* qb = curr.queries.data() + m * d;
          for (int64_t k = 0; k < d; ++k) {
            const double dk = static_cast<double>(qa[k]) - static_cast<double>(qb[k]);
            acc += dk * dk;
          }
          c.at(n, m) = acc;
        }
      break;
    case MatchCostKind::kCosine:
      for (int64_t n = 0; n < n_q; ++n)
        for (int64_t m = 0; m < n_q; ++m) {
          double dot = 0.0, na = 0.0, nb = 0.0;
          const T* qa = hist.queries.data() + n * d;
          const T* qb = curr.queries.data() + m * d;
          for (int64_t k = 0; k < d; ++k) {
            dot += static_cast<double>(qa[k]) * static_cast<double>(qb[k]);
            na += static_cast<double>(qa[k]) * static_cast<double>(qa[k]);
            nb += static_cast<double>(qb[k]) * static_cast<double>(qb[k]);
          }
          c.at(n, m) = -dot / (std::sqrt(na * nb) + 1e-12);
        }
      break;
    case MatchCostKind::kChamfer: {
      if (hist.points.v.empty() || curr.points.v.empty())
        throw std::invalid_argument("match_cost: chamfer mode requires regressed point sets");
      const int64_t p = hist.points.shape[1];
      for (int64_t n = 0; n < n_q; ++n)
        for (int64_t m = 0; m < n_q; ++m)
          c.at(n, m) = chamfer_distance(hist.points.data() + n * p * 2, p,
                                        curr.points.data() + m * p * 2, p);
      break;
    }
  }
  return c;
}

template <class T>
struct AlignedHistory {
  std::vector<Tensor<T>> queries;           // one aligned [N_q, D] per frame
  std::vector<std::vector<int64_t>> perms;  // row n of the source -> row pi(n)
};

// Reorders each historical query set so that row m corresponds to current
// query m, using an independent assignment per frame.
template <class T>
AlignedHistory<T> align_history(const std::vector<const InstanceQuerySet<T>*>& window,
                                const InstanceQuerySet<T>& current,
                                MatchCostKind kind = MatchCostKind::kL2) {
  AlignedHistory<T> out;
  for (const InstanceQuerySet<T>* hist : window) {
    const Assignment a = solve_assignment(match_cost(*hist, current, kind));
    const int64_t n_q = hist->queries.shape[0];
    const int64_t d = hist->queries.shape[1];
    Tensor<T> aligned({n_q, d});
    for (int64_t n = 0; n < n_q; ++n) {
      const int64_t m = a.row_to_col[static_cast<size_t>(n)];
      std::copy_n(hist->queries.data() + n * d, d, aligned.data() + m * d);
    }
    out.queries.push_back(std::move(aligned));
    out.perms.push_back(a.row_to_col);
  }
  return out;
}

template <class T>
struct InstanceFusionVars {
  GssVars<T> spatial;   // instance-first sequence
  GssVars<T> temporal;  // temporal-first sequence
};

// window: aligned history (oldest first) with the current query var last.
// Builds the two sequence arrangements, runs each through its own gated
// block, extracts the current frame's positions and averages elementwise.
template <class T>
Var<T> fuse_instances(const std::vector<Var<T>>& window, const InstanceFusionVars<T>& p,
                      InstanceScanSet set, SsmMode mode) {
  if (window.empty()) throw std::invalid_argument("fuse_instances: empty window");
  const int64_t n_hist = static_cast<int64_t>(window.size()) - 1;
  const int64_t n_q = window[0].shape()[0];

  std::vector<Var<T>> extractions;
  if (set == InstanceScanSet::kSpatial || set == InstanceScanSet::kBoth) {
    Var<T> h_s = build_instance_sequence(window, InstanceLayout::kInstanceFirst);
    Var<T> o_s = gss_block(h_s, p.spatial, mode);
    extractions.push_back(
        gather_rows(o_s, current_frame_positions(n_hist, n_q, InstanceLayout::kInstanceFirst)));
  }
  if (set == InstanceScanSet::kTemporal || set == InstanceScanSet::kBoth) {
    Var<T> h_t = build_instance_sequence(window, InstanceLayout::kTemporalFirst);
    Var<T> o_t = gss_block(h_t, p.temporal, mode);
    extractions.push_back(
        gather_rows(o_t, current_frame_positions(n_hist, n_q, InstanceLayout::kTemporalFirst)));
  }
  return pairwise_mean(std::move(extractions));
}

}  // namespace mapfuse
