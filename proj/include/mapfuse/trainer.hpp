#pragma once

#include <cmath>
#include <cstdint>
#include <cstdlib>
#include <functional>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

#include "mapfuse/checkpoint.hpp"
#include "mapfuse/evaluation.hpp"
#include "mapfuse/loss.hpp"
#include "mapfuse/model.hpp"
#include "mapfuse/optimizer.hpp"
#include "mapfuse/rng.hpp"
#include "mapfuse/synthworld.hpp"

namespace mapfuse {

struct TrainConfig {
  double lr = 2.5e-4;
  double weight_decay = 0.01;
  int64_t epochs = 20;
  int64_t batch_scenarios = 8;
  bool deterministic = true;
  uint64_t seed = 1;
  double grad_clip = 5.0;          // global L2 norm, 0 disables
  int64_t log_eval_scenarios = 4;  // quick per-epoch AP probe on training data
};

// NaN/Inf loss surfaces as a hard failure with the offending location.
class NumericError : public std::runtime_error {
 public:
  NumericError(const std::string& what, uint64_t scenario_seed, int64_t frame)
      : std::runtime_error(what + " (scenario seed " + std::to_string(scenario_seed) +
                           ", frame " + std::to_string(frame) + ")"),
        scenario_seed(scenario_seed),
        frame(frame) {}
  uint64_t scenario_seed;
  int64_t frame;
};

struct EpochStats {
  int64_t epoch = 0;
  double loss_pts = 0.0, loss_cls = 0.0, loss_total = 0.0;
  EvalResult train_probe;
};

inline int64_t worker_count(int64_t jobs) {
  int64_t hw = static_cast<int64_t>(std::thread::hardware_concurrency());
  if (hw < 1) hw = 1;
  if (const char* env = std::getenv("MM_THREADS")) {
    const long cap = std::strtol(env, nullptr, 10);
    if (cap >= 1) hw = std::min<int64_t>(hw, cap);
  }
  return std::max<int64_t>(1, std::min<int64_t>(hw, jobs));
}

template <class T>
class Trainer {
 public:
  Trainer(MapModel<T>& model, const TrainConfig& tc, const LossWeights& lw, const EvalConfig& ec)
      : model_(model), tc_(tc), lw_(lw), ec_(ec),
        opt_(model.params, tc.lr, tc.weight_decay) {}

  AdamW<T>& optimizer() { return opt_; }
  int64_t start_epoch = 0;

  // Per-epoch hook: stats already filled; typical use writes CSV rows and
  // checkpoints.
  using EpochHook = std::function<void(const EpochStats&)>;

  std::vector<EpochStats> run(const Dataset& ds, const EpochHook& hook = nullptr) {
    std::vector<EpochStats> all;
    for (int64_t e = start_epoch; e < tc_.epochs; ++e) {
      EpochStats st = run_epoch(ds, e);
      if (tc_.log_eval_scenarios > 0)
        st.train_probe = evaluate_model(model_, ds, ec_, lw_, tc_.log_eval_scenarios);
      if (hook) hook(st);
      all.push_back(std::move(st));
    }
    return all;
  }

  // One optimizer step per frame index across a batch of scenarios processed
  // in lockstep; per-scenario gradients are reduced in scenario order so the
  // result is independent of worker count.
  EpochStats run_epoch(const Dataset& ds, int64_t epoch) {
    const int64_t n = static_cast<int64_t>(ds.scenarios.size());
    if (n == 0) throw std::runtime_error("train: empty dataset");
    std::vector<int64_t> order(static_cast<size_t>(n));
    for (int64_t i = 0; i < n; ++i) order[static_cast<size_t>(i)] = i;
    Rng shuffle_rng = Rng::with_stream(tc_.seed, 1000 + static_cast<uint64_t>(epoch));
    for (int64_t i = n - 1; i > 0; --i)
      std::swap(order[static_cast<size_t>(i)],
                order[static_cast<size_t>(shuffle_rng.uniform_int(0, i))]);

    EpochStats st;
    st.epoch = epoch;
    int64_t frames_done = 0;

    const int64_t bsz = std::max<int64_t>(1, tc_.batch_scenarios);
    for (int64_t b0 = 0; b0 < n; b0 += bsz) {
      const int64_t bn = std::min<int64_t>(bsz, n - b0);
      std::vector<const Scenario*> batch;
      for (int64_t i = 0; i < bn; ++i)
        batch.push_back(&ds.scenarios[static_cast<size_t>(order[static_cast<size_t>(b0 + i)])]);
      std::vector<MemoryBank<T>> banks(static_cast<size_t>(bn),
                                       MemoryBank<T>(model_.cfg.n_memory));

      const int64_t t_frames = static_cast<int64_t>(batch[0]->frames.size());
      for (int64_t f = 0; f < t_frames; ++f) {
        struct Slot {
          std::vector<Tensor<T>> grads;
          double pts = 0, cls = 0, total = 0;
          bool numeric_fail = false;
        };
        std::vector<Slot> slots(static_cast<size_t>(bn));

        auto work = [&](int64_t i) {
          Slot& slot = slots[static_cast<size_t>(i)];
          const Scenario& sc = *batch[static_cast<size_t>(i)];
          if (f >= static_cast<int64_t>(sc.frames.size())) return;
          const FrameData& fd = sc.frames[static_cast<size_t>(f)];
          Tape<T> tape;
          Binding<T> bind = model_.bind(tape, true);
          StepResult<T> res =
              model_.step(tape, bind, banks[static_cast<size_t>(i)], fd.raster.template cast<T>(),
                          fd.pose);
          const auto gts = to_gt_elements<T>(fd.gt);
          FrameLoss<T> fl = total_loss(res.orig_logits, res.orig_points, res.fused_logits,
                                       res.fused_points, gts, lw_);
          const double lv = static_cast<double>(fl.total.value()[0]);
          if (!std::isfinite(lv)) {
            slot.numeric_fail = true;
            return;
          }
          slot.pts = fl.pts;
          slot.cls = fl.cls;
          slot.total = lv;
          tape.backward(fl.total);
          slot.grads.reserve(static_cast<size_t>(model_.params.count()));
          for (int64_t p = 0; p < model_.params.count(); ++p)
            slot.grads.push_back(tape.grad_of(bind.vars[static_cast<size_t>(p)]));
        };

        const int64_t nw = worker_count(bn);
        if (nw <= 1) {
          for (int64_t i = 0; i < bn; ++i) work(i);
        } else {
          std::vector<std::thread> pool;
          for (int64_t w = 0; w < nw; ++w)
            pool.emplace_back([&, w]() {
              for (int64_t i = w; i < bn; i += nw) work(i);
            });
          for (auto& th : pool) th.join();
        }

        // deterministic reduction in scenario order
        std::vector<Tensor<T>> grads;
        grads.reserve(static_cast<size_t>(model_.params.count()));
        for (int64_t p = 0; p < model_.params.count(); ++p)
          grads.push_back(Tensor<T>::zeros(model_.params.tensor(p).shape));
        int64_t contributed = 0;
        for (int64_t i = 0; i < bn; ++i) {
          const Slot& slot = slots[static_cast<size_t>(i)];
          if (slot.numeric_fail)
            throw NumericError("train: non-finite loss", batch[static_cast<size_t>(i)]->seed, f);
          if (slot.grads.empty()) continue;
          for (int64_t p = 0; p < model_.params.count(); ++p) {
            Tensor<T>& acc = grads[static_cast<size_t>(p)];
            const Tensor<T>& g = slot.grads[static_cast<size_t>(p)];
            for (int64_t k = 0; k < acc.size(); ++k) acc[k] += g[k];
          }
          st.loss_pts += slot.pts;
          st.loss_cls += slot.cls;
          st.loss_total += slot.total;
          ++contributed;
          ++frames_done;
        }
        if (contributed == 0) continue;
        const T inv = T(1.0 / static_cast<double>(contributed));
        for (auto& g : grads)
          for (int64_t k = 0; k < g.size(); ++k) g[k] *= inv;
        clip_gradients(grads);
        opt_.step(grads);
      }
    }
    if (frames_done > 0) {
      st.loss_pts /= static_cast<double>(frames_done);
      st.loss_cls /= static_cast<double>(frames_done);
      st.loss_total /= static_cast<double>(frames_done);
    }
    return st;
  }

 private:
  void clip_gradients(std::vector<Tensor<T>>& grads) const {
    if (tc_.grad_clip <= 0.0) return;
    double sq = 0.0;
    for (const auto& g : grads)
      for (int64_t k = 0; k < g.size(); ++k) sq += static_cast<double>(g[k]) * static_cast<double>(g[k]);
    const double norm = std::sqrt(sq);
    if (norm <= tc_.grad_clip) return;
    const T s = T(tc_.grad_clip / norm);
    for (auto& g : grads)
      for (int64_t k = 0; k < g.size(); ++k) g[k] *= s;
  }

  MapModel<T>& model_;
  TrainConfig tc_;
  LossWeights lw_;
  EvalConfig ec_;
  AdamW<T> opt_;
};

// ---- checkpoint glue ----

template <class T>
std::vector<CheckpointEntry> model_entries(const MapModel<T>& model) {
  std::vector<CheckpointEntry> entries;
  for (int64_t i = 0; i < model.params.count(); ++i)
    entries.push_back(to_entry(model.params.name(i), model.params.tensor(i)));
  return entries;
}

template <class T>
void save_model_checkpoint(const std::string& path, const MapModel<T>& model) {
  write_checkpoint(path, model_entries(model));
}

template <class T>
void save_training_state(const std::string& path, const MapModel<T>& model, AdamW<T>& opt,
                         int64_t next_epoch) {
  std::vector<CheckpointEntry> entries = model_entries(model);
  for (int64_t i = 0; i < model.params.count(); ++i) {
    entries.push_back(to_entry("opt.m." + model.params.name(i), opt.moment1(i)));
    entries.push_back(to_entry("opt.v." + model.params.name(i), opt.moment2(i)));
  }
  CheckpointEntry step{"train.step", {1}, {static_cast<float>(opt.step_count())}};
  CheckpointEntry epoch{"train.epoch", {1}, {static_cast<float>(next_epoch)}};
  entries.push_back(std::move(step));
  entries.push_back(std::move(epoch));
  write_checkpoint(path, entries);
}

template <class T>
void load_model_checkpoint(const std::string& path, MapModel<T>& model) {
  const auto entries = read_checkpoint(path);
  std::unordered_map<std::string, const CheckpointEntry*> by_name;
  for (const auto& e : entries) by_name[e.name] = &e;
  for (int64_t i = 0; i < model.params.count(); ++i) {
    auto it = by_name.find(model.params.name(i));
    if (it == by_name.end())
      throw std::runtime_error("checkpoint: missing parameter '" + model.params.name(i) +
                               "' in " + path);
    from_entry(*it->second, model.params.tensor(i));
  }
}

// Returns the epoch to resume from.
template <class T>
int64_t load_training_state(const std::string& path, MapModel<T>& model, AdamW<T>& opt) {
  const auto entries = read_checkpoint(path);
  std::unordered_map<std::string, const CheckpointEntry*> by_name;
  for (const auto& e : entries) by_name[e.name] = &e;
  auto need = [&](const std::string& name) -> const CheckpointEntry& {
    auto it = by_name.find(name);
    if (it == by_name.end())
      throw std::runtime_error("checkpoint: missing entry '" + name + "' in " + path);
    return *it->second;
  };
  for (int64_t i = 0; i < model.params.count(); ++i) {
    from_entry(need(model.params.name(i)), model.params.tensor(i));
    from_entry(need("opt.m." + model.params.name(i)), opt.moment1(i));
    from_entry(need("opt.v." + model.params.name(i)), opt.moment2(i));
  }
  opt.set_step_count(static_cast<int64_t>(need("train.step").values.at(0)));
  return static_cast<int64_t>(need("train.epoch").values.at(0));
}

}  // namespace mapfuse
