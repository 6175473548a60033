#pragma once

#include <cstdint>
#include <deque>
#include <stdexcept>
#include <vector>

#include "mapfuse/geometry.hpp"
#include "mapfuse/tensor.hpp"

namespace mapfuse {

// One candidate map element: a learned query vector plus, once heads have
// run, its class logits and regressed point set.
template <class T>
struct InstanceQuerySet {
  Tensor<T> queries;     // [N_q, D]
  Tensor<T> cls_logits;  // [N_q, K+1], may be empty
  Tensor<T> points;      // [N_q, P, 2], may be empty
};

// Bounded sliding windows of refined BEV features and refined instance
// queries. Entries are plain tensors, so pushing severs any gradient linkage
// to the producing tape by construction.
template <class T>
class MemoryBank {
 public:
  struct BevEntry {
    Tensor<T> bev;  // [C, H, W]
    Pose pose;
    int64_t timestamp;
  };
  struct InsEntry {
    InstanceQuerySet<T> queries;
    int64_t timestamp;
  };

  explicit MemoryBank(int64_t capacity = 4) : capacity_(capacity) {
    if (capacity < 0) throw std::invalid_argument("memory bank: negative capacity");
  }

  int64_t capacity() const { return capacity_; }
  int64_t size() const { return static_cast<int64_t>(bev_window_.size()); }
  bool empty() const { return bev_window_.empty(); }

  void push(Tensor<T> refined_bev, InstanceQuerySet<T> refined_queries, const Pose& pose) {
    const int64_t ts = next_timestamp_++;
    bev_window_.push_back(BevEntry{std::move(refined_bev), pose, ts});
    ins_window_.push_back(InsEntry{std::move(refined_queries), ts});
    while (static_cast<int64_t>(bev_window_.size()) > capacity_) bev_window_.pop_front();
    while (static_cast<int64_t>(ins_window_.size()) > capacity_) ins_window_.pop_front();
  }

  void reset() {
    bev_window_.clear();
    ins_window_.clear();
  }

  const std::deque<BevEntry>& bev_window() const { return bev_window_; }
  const std::deque<InsEntry>& ins_window() const { return ins_window_; }

  // Exactly n_slots (feature, pose) entries for the BEV branch, oldest first.
  // Missing history is filled by replicating the current frame with identity
  // relative pose (padding slots occupy the oldest positions). When more
  // history is stored than requested, the newest n_slots entries win.
  struct BevSlot {
    const Tensor<T>* bev;
    Pose pose;
    bool padded;
  };
  std::vector<BevSlot> window_bev(int64_t n_slots, const Tensor<T>& current,
                                  const Pose& current_pose) const {
    std::vector<BevSlot> slots;
    slots.reserve(static_cast<size_t>(n_slots));
    const int64_t stored = std::min<int64_t>(n_slots, static_cast<int64_t>(bev_window_.size()));
    for (int64_t i = 0; i < n_slots - stored; ++i)
      slots.push_back(BevSlot{&current, current_pose, true});
    const int64_t first = static_cast<int64_t>(bev_window_.size()) - stored;
    for (int64_t i = first; i < static_cast<int64_t>(bev_window_.size()); ++i)
      slots.push_back(BevSlot{&bev_window_[static_cast<size_t>(i)].bev,
                              bev_window_[static_cast<size_t>(i)].pose, false});
    return slots;
  }

  // Instance-side counterpart; padded slots replicate the current query set.
  struct InsSlot {
    const InstanceQuerySet<T>* queries;
    bool padded;
  };
  std::vector<InsSlot> window_ins(int64_t n_slots, const InstanceQuerySet<T>& current) const {
    std::vector<InsSlot> slots;
    slots.reserve(static_cast<size_t>(n_slots));
    const int64_t stored = std::min<int64_t>(n_slots, static_cast<int64_t>(ins_window_.size()));
    for (int64_t i = 0; i < n_slots - stored; ++i) slots.push_back(InsSlot{&current, true});
    const int64_t first = static_cast<int64_t>(ins_window_.size()) - stored;
    for (int64_t i = first; i < static_cast<int64_t>(ins_window_.size()); ++i)
      slots.push_back(InsSlot{&ins_window_[static_cast<size_t>(i)].queries, false});
    return slots;
  }

 private:
  int64_t capacity_;
  int64_t next_timestamp_ = 0;
  std::deque<BevEntry> bev_window_;
  std::deque<InsEntry> ins_window_;
};

}  // namespace mapfuse
