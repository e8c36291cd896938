#pragma once

#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "nir/errors.hpp"
#include "nir/tensor.hpp"

namespace nir {

// Adam with bias correction. beta/epsilon defaults are the optimizer's
// published ones; only the learning rate is task-specific.
struct AdamConfig {
  double lr = 1e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

// Per-parameter first/second moments plus the shared step counter. The
// referenced tensors must outlive the optimizer.
template <typename T>
class Adam {
 public:
  Adam(std::vector<Tensor<T>*> params, AdamConfig cfg = {}) : params_(std::move(params)), cfg_(cfg) {
    if (cfg_.lr <= 0) throw ConfigError("adam: learning rate must be positive");
    m_.resize(params_.size());
    v_.resize(params_.size());
    for (std::size_t i = 0; i < params_.size(); ++i) {
      m_[i].assign(params_[i]->numel(), T(0));
      v_[i].assign(params_[i]->numel(), T(0));
    }
  }

  // One bias-corrected update from the gradients accumulated in each
  // tensor's grad buffer. Does not clear the gradients.
  void step() {
    ++step_;
    const double bc1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(step_));
    const double bc2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(step_));
    for (std::size_t p = 0; p < params_.size(); ++p) {
      Tensor<T>& t = *params_[p];
      if (!t.requires_grad) continue;
      if (t.grad.size() != t.data.size())
        throw DimensionError("adam: gradient shape mismatch for parameter " + std::to_string(p));
      const std::size_t n = t.numel();
      const T b1 = static_cast<T>(cfg_.beta1), b2 = static_cast<T>(cfg_.beta2);
      const T lr = static_cast<T>(cfg_.lr), eps = static_cast<T>(cfg_.epsilon);
      const T c1 = static_cast<T>(1.0 / bc1), c2 = static_cast<T>(1.0 / bc2);
      for (std::size_t i = 0; i < n; ++i) {
        const T g = t.grad[i];
        m_[p][i] = b1 * m_[p][i] + (T(1) - b1) * g;
        v_[p][i] = b2 * v_[p][i] + (T(1) - b2) * g * g;
        const T mhat = m_[p][i] * c1;
        const T vhat = v_[p][i] * c2;
        t.data[i] -= lr * mhat / (std::sqrt(vhat) + eps);
      }
    }
  }

  void zero_grad() {
    for (Tensor<T>* t : params_) t->zero_grad();
  }

  std::uint64_t step_count() const { return step_; }
  const AdamConfig& config() const { return cfg_; }

  // Raw state access for trainer checkpointing.
  std::vector<std::vector<T>>& moments_m() { return m_; }
  std::vector<std::vector<T>>& moments_v() { return v_; }
  void set_step_count(std::uint64_t s) { step_ = s; }

 private:
  std::vector<Tensor<T>*> params_;
  AdamConfig cfg_;
  std::vector<std::vector<T>> m_;
  std::vector<std::vector<T>> v_;
  std::uint64_t step_ = 0;
};

}  // namespace nir
