#pragma once

#include <algorithm>
#include <array>
#include <cstdint>
#include <iomanip>
#include <map>
#include <ostream>
#include <string>
#include <vector>

#include "mapfuse/loss.hpp"
#include "mapfuse/memory_bank.hpp"
#include "mapfuse/model.hpp"
#include "mapfuse/pointset.hpp"
#include "mapfuse/synthworld.hpp"

namespace mapfuse {

struct EvalConfig {
  std::vector<double> thresholds{0.5, 1.0, 1.5};  // meters
  double score_threshold = 0.05;
  std::array<bool, kNumMapClasses> class_enabled{true, true, true};

  void validate() const {
    if (thresholds.empty()) throw std::invalid_argument("eval config: no thresholds");
    double prev = 0.0;
    for (double t : thresholds) {
      if (t <= prev) throw std::invalid_argument("eval config: thresholds must be strictly increasing and positive");
      prev = t;
    }
  }
};

struct ScoredPolyline {
  double score;
  int64_t frame_key;
  std::vector<double> points;  // (x,y) pairs
};

struct GtRecord {
  int64_t frame_key;
  std::vector<double> points;
};

struct EvalResult {
  std::array<double, kNumMapClasses> ap{0.0, 0.0, 0.0};  // threshold-averaged
  double map = 0.0;
  double loss_pts = 0.0, loss_cls = 0.0, loss_total = 0.0;
};

// Score-ordered greedy matching at one Chamfer threshold, 11-point
// interpolated area under the precision-recall curve.
inline double average_precision(std::vector<ScoredPolyline> preds,
                                const std::vector<GtRecord>& gts, double threshold) {
  if (gts.empty()) return 0.0;
  std::stable_sort(preds.begin(), preds.end(),
                   [](const ScoredPolyline& a, const ScoredPolyline& b) { return a.score > b.score; });
  std::map<int64_t, std::vector<size_t>> gt_by_frame;
  for (size_t i = 0; i < gts.size(); ++i) gt_by_frame[gts[i].frame_key].push_back(i);
  std::vector<char> gt_used(gts.size(), 0);

  std::vector<char> is_tp(preds.size(), 0);
  for (size_t pi = 0; pi < preds.size(); ++pi) {
    const auto it = gt_by_frame.find(preds[pi].frame_key);
    if (it == gt_by_frame.end()) continue;
    double best = threshold;
    int64_t best_gt = -1;
    for (size_t gi : it->second) {
      if (gt_used[gi]) continue;
      const double d = chamfer_distance(preds[pi].points.data(),
                                        static_cast<int64_t>(preds[pi].points.size() / 2),
                                        gts[gi].points.data(),
                                        static_cast<int64_t>(gts[gi].points.size() / 2));
      if (d < best) {
        best = d;
        best_gt = static_cast<int64_t>(gi);
      }
    }
    if (best_gt >= 0) {
      gt_used[static_cast<size_t>(best_gt)] = 1;
      is_tp[pi] = 1;
    }
  }

  // 11-point interpolation over the cumulative PR curve
  const double n_gt = static_cast<double>(gts.size());
  std::vector<double> precision(preds.size()), recall(preds.size());
  int64_t tp = 0;
  for (size_t i = 0; i < preds.size(); ++i) {
    tp += is_tp[i];
    precision[i] = static_cast<double>(tp) / static_cast<double>(i + 1);
    recall[i] = static_cast<double>(tp) / n_gt;
  }
  double ap = 0.0;
  for (int r = 0; r <= 10; ++r) {
    const double rt = static_cast<double>(r) / 10.0;
    double pmax = 0.0;
    for (size_t i = 0; i < preds.size(); ++i)
      if (recall[i] >= rt) pmax = std::max(pmax, precision[i]);
    ap += pmax / 11.0;
  }
  return ap;
}

// Pooled per-class predictions/GT over a whole evaluation split.
struct DetectionPool {
  std::array<std::vector<ScoredPolyline>, kNumMapClasses> preds;
  std::array<std::vector<GtRecord>, kNumMapClasses> gts;

  void add_gt(int64_t frame_key, const GtPolyline& gt) {
    std::vector<double> pts(static_cast<size_t>(gt.points.size()));
    for (int64_t i = 0; i < gt.points.size(); ++i) pts[static_cast<size_t>(i)] = gt.points[i];
    gts[gt.cls].push_back(GtRecord{frame_key, std::move(pts)});
  }

  EvalResult finalize(const EvalConfig& ec) const {
    EvalResult r;
    double acc = 0.0;
    int64_t n_cls = 0;
    for (int64_t c = 0; c < kNumMapClasses; ++c) {
      double ap_c = 0.0;
      for (double th : ec.thresholds)
        ap_c += average_precision(preds[static_cast<size_t>(c)], gts[static_cast<size_t>(c)], th);
      ap_c /= static_cast<double>(ec.thresholds.size());
      r.ap[static_cast<size_t>(c)] = ap_c;
      if (ec.class_enabled[static_cast<size_t>(c)]) {
        acc += ap_c;
        ++n_cls;
      }
    }
    r.map = n_cls > 0 ? acc / static_cast<double>(n_cls) : 0.0;
    return r;
  }
};

// Extracts scored class predictions from one head output. The background
// logit is excluded from scoring.
template <class T>
void collect_predictions(const FrameOutput<T>& out, int64_t frame_key, double score_threshold,
                         DetectionPool& pool) {
  const int64_t n_q = out.cls_logits.shape[0];
  const int64_t k1 = out.cls_logits.shape[1];
  const int64_t p = out.points.shape[1];
  for (int64_t i = 0; i < n_q; ++i) {
    int64_t best_c = 0;
    double best_logit = static_cast<double>(out.cls_logits[i * k1]);
    for (int64_t c = 1; c < k1 - 1; ++c) {
      const double l = static_cast<double>(out.cls_logits[i * k1 + c]);
      if (l > best_logit) {
        best_logit = l;
        best_c = c;
      }
    }
    const double score = detail::stable_sigmoid(best_logit);
    if (score < score_threshold) continue;
    std::vector<double> pts(static_cast<size_t>(2 * p));
    for (int64_t k = 0; k < 2 * p; ++k)
      pts[static_cast<size_t>(k)] = static_cast<double>(out.points[i * 2 * p + k]);
    pool.preds[static_cast<size_t>(best_c)].push_back(ScoredPolyline{score, frame_key, std::move(pts)});
  }
}

template <class T>
std::vector<GtElement<T>> to_gt_elements(const std::vector<GtPolyline>& gts) {
  std::vector<GtElement<T>> out;
  out.reserve(gts.size());
  for (const auto& g : gts) {
    GtElement<T> e;
    e.cls = g.cls;
    e.points = g.points.template cast<T>();
    out.push_back(std::move(e));
  }
  return out;
}

// Streaming evaluation: step() over every scenario with a bank reset at the
// start of each, pooling fused-head predictions and mean frame losses.
template <class T>
EvalResult evaluate_model(const MapModel<T>& model, const Dataset& ds, const EvalConfig& ec,
                          const LossWeights& lw, int64_t max_scenarios = -1) {
  ec.validate();
  if (ds.h != model.cfg.h || ds.w != model.cfg.w || ds.c_obs != model.cfg.c_obs ||
      ds.p != model.cfg.p)
    throw std::runtime_error("evaluate: dataset geometry incompatible with model");
  DetectionPool pool;
  double lp = 0.0, lc = 0.0, lt = 0.0;
  int64_t frames = 0;
  const int64_t n_sc = max_scenarios < 0
                           ? static_cast<int64_t>(ds.scenarios.size())
                           : std::min<int64_t>(max_scenarios, ds.scenarios.size());
  for (int64_t s = 0; s < n_sc; ++s) {
    const Scenario& sc = ds.scenarios[static_cast<size_t>(s)];
    MemoryBank<T> bank(model.cfg.n_memory);
    Tape<T> tape;
    for (size_t f = 0; f < sc.frames.size(); ++f) {
      tape.clear();
      Binding<T> b = model.bind(tape, false);
      const FrameData& fd = sc.frames[f];
      StepResult<T> res = model.step(tape, b, bank, fd.raster.template cast<T>(), fd.pose);
      const int64_t frame_key = s * 100000 + static_cast<int64_t>(f);
      collect_predictions(res.fused, frame_key, ec.score_threshold, pool);
      for (const auto& g : fd.gt) pool.add_gt(frame_key, g);
      const auto gts = to_gt_elements<T>(fd.gt);
      FrameLoss<T> fl = total_loss(res.orig_logits, res.orig_points, res.fused_logits,
                                   res.fused_points, gts, lw);
      lp += fl.pts;
      lc += fl.cls;
      lt += static_cast<double>(fl.total.value()[0]);
      ++frames;
    }
  }
  EvalResult r = pool.finalize(ec);
  if (frames > 0) {
    r.loss_pts = lp / static_cast<double>(frames);
    r.loss_cls = lc / static_cast<double>(frames);
    r.loss_total = lt / static_cast<double>(frames);
  }
  return r;
}

// ---- metrics CSV ----

inline const char* metrics_csv_header() {
  return "tag,split,AP_ped,AP_div,AP_bou,mAP,loss_pts,loss_cls,loss_total";
}

inline void write_metrics_row(std::ostream& os, const std::string& tag, const std::string& split,
                              const EvalResult& r) {
  os << tag << ',' << split << ',' << std::fixed << std::setprecision(4) << r.ap[0] << ','
     << r.ap[1] << ',' << r.ap[2] << ',' << r.map << ',' << r.loss_pts << ',' << r.loss_cls << ','
     << r.loss_total << '\n';
}

}  // namespace mapfuse
