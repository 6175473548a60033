#pragma once

#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <vector>

#include "mapfuse/model.hpp"
#include "mapfuse/tensor.hpp"

namespace mapfuse {

// Adaptive optimizer with decoupled weight decay.
template <class T>
class AdamW {
 public:
  AdamW(const ParamRegistry<T>& registry, double lr, double weight_decay, double beta1 = 0.9,
        double beta2 = 0.999, double eps = 1e-8)
      : reg_(&registry), lr_(lr), wd_(weight_decay), b1_(beta1), b2_(beta2), eps_(eps) {
    for (int64_t i = 0; i < registry.count(); ++i) {
      m_.push_back(Tensor<T>::zeros(registry.tensor(i).shape));
      v_.push_back(Tensor<T>::zeros(registry.tensor(i).shape));
    }
  }

  void step(const std::vector<Tensor<T>>& grads) {
    if (static_cast<int64_t>(grads.size()) != reg_->count())
      throw std::invalid_argument("adamw: gradient count mismatch");
    ++t_;
    const double bc1 = 1.0 - std::pow(b1_, static_cast<double>(t_));
    const double bc2 = 1.0 - std::pow(b2_, static_cast<double>(t_));
    for (int64_t p = 0; p < reg_->count(); ++p) {
      Tensor<T>& w = reg_->tensor(p);
      Tensor<T>& m = m_[static_cast<size_t>(p)];
      Tensor<T>& v = v_[static_cast<size_t>(p)];
      const Tensor<T>& g = grads[static_cast<size_t>(p)];
      for (int64_t i = 0; i < w.size(); ++i) {
        const double gi = static_cast<double>(g[i]);
        const double mi = b1_ * static_cast<double>(m[i]) + (1.0 - b1_) * gi;
        const double vi = b2_ * static_cast<double>(v[i]) + (1.0 - b2_) * gi * gi;
        m[i] = T(mi);
        v[i] = T(vi);
        const double update = (mi / bc1) / (std::sqrt(vi / bc2) + eps_) +
                              wd_ * static_cast<double>(w[i]);
        w[i] = T(static_cast<double>(w[i]) - lr_ * update);
      }
    }
  }

  int64_t step_count() const { return t_; }
  void set_step_count(int64_t t) { t_ = t; }
  Tensor<T>& moment1(int64_t p) { return m_[static_cast<size_t>(p)]; }
  Tensor<T>& moment2(int64_t p) { return v_[static_cast<size_t>(p)]; }

 private:
  const ParamRegistry<T>* reg_;
  double lr_, wd_, b1_, b2_, eps_;
  int64_t t_ = 0;
  std::vector<Tensor<T>> m_, v_;
};

}  // namespace mapfuse
