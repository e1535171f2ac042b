#include "cref/core/optim.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace cref {

AdamW::AdamW(ParameterList params, AdamWConfig config)
    : params_(std::move(params)), config_(config) {
  if (!(config_.learning_rate > 0)) throw std::invalid_argument("AdamW: learning rate must be > 0");
  if (!(config_.epsilon > 0)) throw std::invalid_argument("AdamW: epsilon must be > 0");
  if (config_.weight_decay < 0) throw std::invalid_argument("AdamW: weight decay must be >= 0");
  m_.reserve(params_.size());
  v_.reserve(params_.size());
  for (const auto& p : params_) {
    if (!p.tensor.requires_grad())
      throw std::invalid_argument("AdamW: parameter '" + p.name + "' is not trainable");
    m_.emplace_back(p.tensor.size(), real(0));
    v_.emplace_back(p.tensor.size(), real(0));
  }
}

real AdamW::learning_rate_at(std::size_t step) const {
  if (config_.warmup_steps == 0 || step >= config_.warmup_steps) return config_.learning_rate;
  return config_.learning_rate * static_cast<real>(step) / static_cast<real>(config_.warmup_steps);
}

real AdamW::step() {
  for (const auto& p : params_)
    if (!p.tensor.has_grad())
      throw std::logic_error("AdamW: parameter '" + p.name + "' has no gradient for this step");
  ++step_;
  const real lr = learning_rate_at(step_);
  const real bc1 = real(1) - std::pow(config_.beta1, static_cast<real>(step_));
  const real bc2 = real(1) - std::pow(config_.beta2, static_cast<real>(step_));
  for (std::size_t k = 0; k < params_.size(); ++k) {
    Tensor t = params_[k].tensor;
    auto w = t.mutable_values();
    auto g = t.grad();
    auto& m = m_[k];
    auto& v = v_[k];
    for (std::size_t i = 0; i < w.size(); ++i) {
      m[i] = config_.beta1 * m[i] + (real(1) - config_.beta1) * g[i];
      v[i] = config_.beta2 * v[i] + (real(1) - config_.beta2) * g[i] * g[i];
      const real mhat = m[i] / bc1;
      const real vhat = v[i] / bc2;
      w[i] -= lr * config_.weight_decay * w[i];
      w[i] -= lr * mhat / (std::sqrt(vhat) + config_.epsilon);
    }
    t.clear_grad();
  }
  return lr;
}

}  // namespace cref
