#pragma once

#include "gocc/tensor.hpp"

namespace gocc {

// Linear warmup to peak_lr, then cosine decay to zero at total_steps.
// Steps past total_steps clamp to the final value.
double lr_schedule(std::size_t step, std::size_t warmup_steps, std::size_t total_steps,
                   double peak_lr);

struct AdamConfig {
  double lr = 2e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 0.0;  // decoupled
};

// Per-parameter first/second moments plus the shared step counter.
class AdamState {
 public:
  AdamState(std::vector<Tensor> params, AdamConfig cfg);

  // One AdamW update from the gradients currently held by the parameters.
  // `lr_override` < 0 means use cfg.lr.
  void step(double lr_override = -1.0);

  std::size_t step_count() const { return step_; }
  AdamConfig& config() { return cfg_; }
  const std::vector<Tensor>& params() const { return params_; }

  // Moment access for checkpointing.
  std::vector<real>& moment1(std::size_t i) { return m_[i]; }
  std::vector<real>& moment2(std::size_t i) { return v_[i]; }
  void set_step_count(std::size_t s) { step_ = s; }

  // Per-parameter weight-decay multiplier (1 by default; 0 exempts a param).
  void set_decay_scale(std::size_t i, double s) { wd_scale_[i] = s; }

 private:
  std::vector<Tensor> params_;
  std::vector<std::vector<real>> m_, v_;
  std::vector<double> wd_scale_;
  std::size_t step_ = 0;
  AdamConfig cfg_;
};

}  // namespace gocc
