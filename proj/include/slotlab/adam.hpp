#pragma once

#include <cmath>
#include <vector>

#include "slotlab/graph.hpp"

namespace slotlab {

// Adam with bias correction. The learning rate is passed per step so the
// caller owns the schedule (warmup etc.).
template <typename T>
class Adam {
 public:
  explicit Adam(ParamRefs<T> params, T beta1 = T(0.9), T beta2 = T(0.999),
                T eps = T(1e-8))
      : params_(std::move(params)), beta1_(beta1), beta2_(beta2), eps_(eps) {
    for (auto* p : params_) {
      m_.emplace_back(p->value.shape());
      v_.emplace_back(p->value.shape());
    }
  }

  void zero_grad() {
    for (auto* p : params_) p->grad.zero();
  }

  void step(T lr) {
    ++t_;
    T bc1 = T(1) - std::pow(beta1_, T(t_));
    T bc2 = T(1) - std::pow(beta2_, T(t_));
    for (size_t i = 0; i < params_.size(); ++i) {
      Parameter<T>& p = *params_[i];
      if (!p.trainable) continue;
      T* w = p.value.data();
      const T* g = p.grad.data();
      T* m = m_[i].data();
      T* v = v_[i].data();
      int64_t n = p.value.numel();
      for (int64_t j = 0; j < n; ++j) {
        m[j] = beta1_ * m[j] + (T(1) - beta1_) * g[j];
        v[j] = beta2_ * v[j] + (T(1) - beta2_) * g[j] * g[j];
        T mhat = m[j] / bc1;
        T vhat = v[j] / bc2;
        w[j] -= lr * mhat / (std::sqrt(vhat) + eps_);
      }
    }
  }

  int64_t steps_taken() const { return t_; }

 private:
  ParamRefs<T> params_;
  std::vector<Tensor<T>> m_, v_;
  T beta1_, beta2_, eps_;
  int64_t t_ = 0;
};

// Linear warmup, then constant.
template <typename T>
T warmup_lr(T base_lr, int64_t step, int64_t warmup_steps) {
  if (warmup_steps <= 0 || step >= warmup_steps) return base_lr;
  return base_lr * T(step + 1) / T(warmup_steps);
}

}  // namespace slotlab
