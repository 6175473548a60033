#pragma once

#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <vector>

#include "mapfuse/hungarian.hpp"
#include "mapfuse/model.hpp"
#include "mapfuse/ops.hpp"
#include "mapfuse/tensor.hpp"

namespace mapfuse {

struct LossWeights {
  double lambda_pts = 5.0;
  double lambda_cls = 50.0;
  double focal_alpha = 0.25;
  double focal_gamma = 2.0;
  double smooth_l1_delta = 1.0;
};

template <class T>
struct GtElement {
  int64_t cls = 0;   // 0..K-1
  Tensor<T> points;  // [P, 2] ego metric
};

namespace detail {

template <class T>
double smooth_l1_value(T d, double delta) {
  const double a = std::abs(static_cast<double>(d));
  return a <= delta ? 0.5 * a * a / delta : a - 0.5 * delta;
}

}  // namespace detail

// Mean elementwise SmoothL1 over all 2P coordinates for one point order.
template <class T>
double polyline_cost_directed(const T* pred, const T* gt, int64_t p, double delta,
                              bool reverse_gt) {
  double acc = 0.0;
  for (int64_t k = 0; k < p; ++k) {
    const int64_t gk = reverse_gt ? p - 1 - k : k;
    acc += detail::smooth_l1_value(static_cast<double>(pred[2 * k]) -
                                       static_cast<double>(gt[2 * gk]),
                                   delta);
    acc += detail::smooth_l1_value(static_cast<double>(pred[2 * k + 1]) -
                                       static_cast<double>(gt[2 * gk + 1]),
                                   delta);
  }
  return acc / static_cast<double>(2 * p);
}

// Direction-ambiguity handling: minimum over forward and reversed gt order.
template <class T>
double polyline_cost(const T* pred, const T* gt, int64_t p, double delta) {
  return std::min(polyline_cost_directed(pred, gt, p, delta, false),
                  polyline_cost_directed(pred, gt, p, delta, true));
}

template <class T>
bool polyline_best_reversed(const T* pred, const T* gt, int64_t p, double delta) {
  return polyline_cost_directed(pred, gt, p, delta, true) <
         polyline_cost_directed(pred, gt, p, delta, false);
}

// Sigmoid focal classification for one query: K+1 logits, target class in
// [0, K]; the background class (index K) supervises every logit negative.
template <class T>
double focal_cls(const T* logits, int64_t k_plus_1, int64_t target, double alpha, double gamma) {
  const int64_t background = k_plus_1 - 1;
  double acc = 0.0;
  for (int64_t i = 0; i < k_plus_1; ++i) {
    const bool pos = (target != background) && (i == target);
    const double z = pos ? static_cast<double>(logits[i]) : -static_cast<double>(logits[i]);
    const double at = pos ? alpha : 1.0 - alpha;
    const double q = detail::stable_sigmoid(-z);
    const double sp = detail::softplus(-z);
    acc += at * std::pow(q, gamma) * sp;
  }
  return acc;
}

// Hungarian matching of predictions to ground-truth elements with cost
// lambda1*polyline + lambda2*(1 - prob_target). Returns pred index -> gt
// index, -1 for background.
template <class T>
std::vector<int64_t> match_gt(const FrameOutput<T>& preds, const std::vector<GtElement<T>>& gts,
                              const LossWeights& w) {
  const int64_t n_q = preds.cls_logits.shape[0];
  const int64_t p = preds.points.shape[1];
  if (static_cast<int64_t>(gts.size()) > n_q)
    throw std::invalid_argument("match_gt: more ground-truth elements than queries");
  std::vector<int64_t> pred_to_gt(static_cast<size_t>(n_q), -1);
  if (gts.empty()) return pred_to_gt;

  CostMatrix cost(n_q, static_cast<int64_t>(gts.size()));
  const int64_t k1 = preds.cls_logits.shape[1];
  for (int64_t i = 0; i < n_q; ++i) {
    const T* pred_pts = preds.points.data() + i * p * 2;
    for (size_t j = 0; j < gts.size(); ++j) {
      const double pc = polyline_cost(pred_pts, gts[j].points.data(), p, w.smooth_l1_delta);
      const double prob = detail::stable_sigmoid(
          static_cast<double>(preds.cls_logits[i * k1 + gts[j].cls]));
      cost.at(i, static_cast<int64_t>(j)) = w.lambda_pts * pc + w.lambda_cls * (1.0 - prob);
    }
  }
  const Assignment a = solve_assignment(cost);
  for (int64_t i = 0; i < n_q; ++i) pred_to_gt[static_cast<size_t>(i)] = a.row_to_col[static_cast<size_t>(i)];
  return pred_to_gt;
}

template <class T>
struct FrameLoss {
  Var<T> total;      // scalar on the tape
  double pts = 0.0;  // component values for logging
  double cls = 0.0;
};

// lambda1 * L_pts + lambda2 * L_cls against this head's own matching.
// L_pts averages the direction-minimal SmoothL1 over matched pairs; L_cls is
// the mean focal term over all queries with unmatched queries supervised as
// background.
template <class T>
FrameLoss<T> map_loss(Var<T> logits, Var<T> points, const std::vector<GtElement<T>>& gts,
                      const LossWeights& w) {
  Tape<T>& t = *logits.tape;
  const int64_t n_q = logits.shape()[0];
  const int64_t k1 = logits.shape()[1];
  const int64_t p2 = points.shape()[1];
  const int64_t p = p2 / 2;

  FrameOutput<T> values;
  values.cls_logits = logits.value();
  values.points = points.value();
  values.points.shape = {n_q, p, 2};
  const std::vector<int64_t> matching = match_gt(values, gts, w);

  // classification: focal against one-hot targets, background all-negative
  Tensor<T> targets({n_q, k1});
  for (int64_t i = 0; i < n_q; ++i) {
    const int64_t j = matching[static_cast<size_t>(i)];
    if (j >= 0) targets.at(i, gts[static_cast<size_t>(j)].cls) = T(1);
  }
  Var<T> cls_terms = focal_bce(logits, targets, T(w.focal_alpha), T(w.focal_gamma));
  Var<T> cls_loss = scale(sum(cls_terms), T(1) / T(n_q));

  // points: direction-minimal SmoothL1 over matched pairs
  Var<T> pts_loss;
  int64_t matched = 0;
  std::vector<Var<T>> terms;
  for (int64_t i = 0; i < n_q; ++i) {
    const int64_t j = matching[static_cast<size_t>(i)];
    if (j < 0) continue;
    const GtElement<T>& gt = gts[static_cast<size_t>(j)];
    const bool rev = polyline_best_reversed(values.points.data() + i * p2, gt.points.data(), p,
                                            w.smooth_l1_delta);
    Tensor<T> gt_row({1, p2});
    for (int64_t k = 0; k < p; ++k) {
      const int64_t gk = rev ? p - 1 - k : k;
      gt_row[2 * k] = gt.points[2 * gk];
      gt_row[2 * k + 1] = gt.points[2 * gk + 1];
    }
    Var<T> pred_row = slice_rows(points, i, i + 1);
    Var<T> diff = sub(pred_row, t.constant(gt_row));
    terms.push_back(mean(smooth_l1(diff, T(w.smooth_l1_delta))));
    ++matched;
  }
  if (terms.empty()) {
    pts_loss = t.constant(Tensor<T>::scalar(T(0)));
  } else {
    Var<T> acc = terms[0];
    for (size_t i = 1; i < terms.size(); ++i) acc = add(acc, terms[i]);
    pts_loss = scale(acc, T(1) / T(matched));
  }

  FrameLoss<T> out;
  out.total = add(scale(pts_loss, T(w.lambda_pts)), scale(cls_loss, T(w.lambda_cls)));
  out.pts = static_cast<double>(pts_loss.value()[0]);
  out.cls = static_cast<double>(cls_loss.value()[0]);
  return out;
}

// Both the decoder's original queries and the fused queries are supervised.
template <class T>
FrameLoss<T> total_loss(Var<T> orig_logits, Var<T> orig_points, Var<T> fused_logits,
                        Var<T> fused_points, const std::vector<GtElement<T>>& gts,
                        const LossWeights& w) {
  FrameLoss<T> lo = map_loss(orig_logits, orig_points, gts, w);
  FrameLoss<T> lf = map_loss(fused_logits, fused_points, gts, w);
  FrameLoss<T> out;
  out.total = add(lo.total, lf.total);
  out.pts = lo.pts + lf.pts;
  out.cls = lo.cls + lf.cls;
  return out;
}

}  // namespace mapfuse
