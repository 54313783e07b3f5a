#pragma once

#include <cmath>
#include <vector>

#include "sketchlab/autodiff.hpp"

namespace sketchlab {

// Adam with optional global-norm gradient clipping.  One instance per
// parameter group; moment buffers are exposed for checkpointing.
class Adam {
 public:
  struct Config {
    double lr = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
    double clip_norm = 0.0;  // <= 0 disables clipping
  };

  Adam() = default;
  Adam(std::vector<Var> params, Config cfg)
      : cfg_(cfg), params_(std::move(params)) {
    m_.reserve(params_.size());
    v_.reserve(params_.size());
    for (const auto& p : params_) {
      m_.emplace_back(Tensor(p->value.shape()));
      v_.emplace_back(Tensor(p->value.shape()));
    }
  }

  // Scales the group's gradients so their joint L2 norm is at most
  // cfg.clip_norm.  Returns the pre-clip norm.
  double clip_gradients() {
    double sq = 0.0;
    for (const auto& p : params_) {
      if (!p->grad.size()) continue;
      for (long i = 0; i < p->grad.size(); ++i) sq += p->grad[i] * p->grad[i];
    }
    double norm = std::sqrt(sq);
    if (cfg_.clip_norm > 0.0 && norm > cfg_.clip_norm) {
      double scale = cfg_.clip_norm / norm;
      for (const auto& p : params_)
        if (p->grad.size()) p->grad *= scale;
    }
    return norm;
  }

  void step() {
    if (cfg_.clip_norm > 0.0) clip_gradients();
    ++t_;
    double bc1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(t_));
    double bc2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(t_));
    for (size_t k = 0; k < params_.size(); ++k) {
      Var& p = params_[k];
      long n = p->value.size();
      const bool has_grad = p->grad.size() == n;
      for (long i = 0; i < n; ++i) {
        double g = has_grad ? p->grad[i] : 0.0;
        m_[k][i] = cfg_.beta1 * m_[k][i] + (1.0 - cfg_.beta1) * g;
        v_[k][i] = cfg_.beta2 * v_[k][i] + (1.0 - cfg_.beta2) * g * g;
        double mhat = m_[k][i] / bc1;
        double vhat = v_[k][i] / bc2;
        p->value[i] -= cfg_.lr * mhat / (std::sqrt(vhat) + cfg_.eps);
      }
    }
  }

  void zero_grad() { sketchlab::zero_grad(params_); }

  const Config& config() const { return cfg_; }
  long step_count() const { return t_; }
  void set_step_count(long t) { t_ = t; }
  size_t size() const { return params_.size(); }
  const std::vector<Var>& params() const { return params_; }
  Tensor& moment1(size_t i) { return m_[i]; }
  Tensor& moment2(size_t i) { return v_[i]; }
  const Tensor& moment1(size_t i) const { return m_[i]; }
  const Tensor& moment2(size_t i) const { return v_[i]; }

 private:
  Config cfg_;
  long t_ = 0;
  std::vector<Var> params_;
  std::vector<Tensor> m_, v_;
};

}  // namespace sketchlab
