#include "gocc/optim.hpp"

#include <cmath>

namespace gocc {

double lr_schedule(std::size_t step, std::size_t warmup_steps, std::size_t total_steps,
                   double peak_lr) {
  require(total_steps > 0, "lr_schedule: total_steps must be positive");
  require(warmup_steps < total_steps, "lr_schedule: warmup must be shorter than total");
  if (step > total_steps) step = total_steps;
  if (step < warmup_steps) return peak_lr * double(step) / double(warmup_steps);
  const double t = double(step - warmup_steps) / double(total_steps - warmup_steps);
  return peak_lr * 0.5 * (1.0 + std::cos(M_PI * t));
}

AdamState::AdamState(std::vector<Tensor> params, AdamConfig cfg)
    : params_(std::move(params)), cfg_(cfg) {
  m_.reserve(params_.size());
  v_.reserve(params_.size());
  for (const auto& p : params_) {
    m_.emplace_back(p.size(), real(0));
    v_.emplace_back(p.size(), real(0));
  }
  wd_scale_.assign(params_.size(), 1.0);
}

void AdamState::step(double lr_override) {
  const double lr = lr_override >= 0.0 ? lr_override : cfg_.lr;
  ++step_;
  const double bc1 = 1.0 - std::pow(cfg_.beta1, double(step_));
  const double bc2 = 1.0 - std::pow(cfg_.beta2, double(step_));
  for (std::size_t i = 0; i < params_.size(); ++i) {
    auto& p = params_[i];
    if (!p.has_grad()) continue;
    const auto& g = p.grad();
    auto& vals = p.values();
    auto& m = m_[i];
    auto& v = v_[i];
    const double wd = cfg_.weight_decay * wd_scale_[i];
    for (std::size_t j = 0; j < vals.size(); ++j) {
      if (wd != 0.0) vals[j] -= real(lr * wd) * vals[j];
      m[j] = real(cfg_.beta1) * m[j] + real(1.0 - cfg_.beta1) * g[j];
      v[j] = real(cfg_.beta2) * v[j] + real(1.0 - cfg_.beta2) * g[j] * g[j];
      const double mhat = double(m[j]) / bc1;
      const double vhat = double(v[j]) / bc2;
      vals[j] -= real(lr * mhat / (std::sqrt(vhat) + cfg_.eps));
    }
  }
}

}  // namespace gocc
