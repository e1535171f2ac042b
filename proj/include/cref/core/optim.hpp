#pragma once

#include <cstddef>
#include <vector>

#include "cref/core/parameters.hpp"

namespace cref {

struct AdamWConfig {
  real learning_rate = 5e-5;
  real beta1 = 0.9;
  real beta2 = 0.999;
  real epsilon = 1e-8;
  real weight_decay = 0.01;
  // Linear warmup to learning_rate over this many updates, then constant.
  std::size_t warmup_steps = 0;
};

// AdamW with bias correction and decoupled weight decay.
class AdamW {
 public:
  AdamW(ParameterList params, AdamWConfig config);

  // Rate applied by the given 1-based update.
  real learning_rate_at(std::size_t step) const;

  // Applies one update from the current grads, then clears them. Throws if a
  // parameter has no gradient. Returns the learning rate used.
  real step();

  std::size_t steps_taken() const { return step_; }
  const AdamWConfig& config() const { return config_; }
  const ParameterList& parameters() const { return params_; }
  std::span<const real> first_moment(std::size_t i) const { return m_[i]; }
  std::span<const real> second_moment(std::size_t i) const { return v_[i]; }

 private:
  ParameterList params_;
  AdamWConfig config_;
  std::vector<std::vector<real>> m_;
  std::vector<std::vector<real>> v_;
  std::size_t step_ = 0;
};

}  // namespace cref
