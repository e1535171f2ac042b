#include "cref/refine/discriminator.hpp"

#include <cmath>
#include <stdexcept>

#include "cref/core/ops.hpp"

namespace cref {
namespace {

Tensor normal_param(Shape shape, double std, Rng& rng) {
  std::vector<real> v(element_count(shape));
  for (auto& x : v) x = static_cast<real>(rng.normal(0.0, std));
  return Tensor::parameter(std::move(shape), std::move(v));
}

Tensor filled(Shape shape, real value) {
  return Tensor::parameter(shape, std::vector<real>(element_count(shape), value));
}

}  // namespace

Discriminator::Discriminator(const DiscriminatorConfig& config, std::uint64_t seed) : config_(config) {
  if (config_.input_dim == 0) throw std::invalid_argument("discriminator: input_dim must be positive");
  if (config_.hidden_dim == 0) config_.hidden_dim = config_.input_dim;
  if (config_.classes < 2) throw std::invalid_argument("discriminator: needs at least two classes");
  if (!(config_.dropout >= 0 && config_.dropout < 1))
    throw std::invalid_argument("discriminator: dropout must lie in [0, 1)");
  const std::size_t d = config_.input_dim, h = config_.hidden_dim, c = config_.classes;
  Rng rng(seed);
  w1_ = normal_param({d, h}, 1.0 / std::sqrt(static_cast<double>(d)), rng);
  b1_ = filled({h}, 0);
  gamma_ = filled({h}, 1);
  beta_ = filled({h}, 0);
  slope_ = filled({1}, 0.25);
  w2_ = normal_param({h, c}, 1.0 / std::sqrt(static_cast<double>(h)), rng);
  b2_ = filled({c}, 0);
  running_mean_.assign(h, 0);
  running_var_.assign(h, 1);
}

Tensor Discriminator::forward(const Tensor& pooled, const ForwardContext& ctx) {
  const real eps = static_cast<real>(config_.batch_norm_eps);
  Tensor h = add_row(matmul(pooled, w1_), b1_);
  if (ctx.training) {
    BatchStats stats;
    h = batch_norm(h, gamma_, beta_, eps, &stats);
    const real m = static_cast<real>(config_.batch_norm_momentum);
    const real n = static_cast<real>(pooled.rows());
    for (std::size_t j = 0; j < running_mean_.size(); ++j) {
      running_mean_[j] = (1 - m) * running_mean_[j] + m * stats.mean[j];
      const real unbiased = n > 1 ? stats.var[j] * n / (n - 1) : stats.var[j];
      running_var_[j] = (1 - m) * running_var_[j] + m * unbiased;
    }
  } else {
    std::vector<real> shift(running_mean_.size()), inv(running_var_.size());
    for (std::size_t j = 0; j < shift.size(); ++j) {
      shift[j] = -running_mean_[j];
      inv[j] = real(1) / std::sqrt(running_var_[j] + eps);
    }
    h = add_row(mul_row(mul_row(add_row(h, Tensor::vector(shift)), Tensor::vector(inv)), gamma_), beta_);
  }
  h = prelu(h, slope_);
  if (ctx.training && config_.dropout > 0) {
    if (!ctx.rng) throw std::invalid_argument("discriminator: training forward pass needs an rng");
    h = dropout(h, static_cast<real>(config_.dropout), *ctx.rng);
  }
  return add_row(matmul(h, w2_), b2_);
}

ParameterList Discriminator::parameters() const {
  return {{"discriminator.fc1.weight", w1_}, {"discriminator.fc1.bias", b1_},
          {"discriminator.norm.gamma", gamma_}, {"discriminator.norm.beta", beta_},
          {"discriminator.prelu.slope", slope_}, {"discriminator.fc2.weight", w2_},
          {"discriminator.fc2.bias", b2_}};
}

}  // namespace cref
