#pragma once

#include <cstddef>
#include <cstdint>
#include <vector>

#include "cref/core/parameters.hpp"
#include "cref/encoder/encoder.hpp"
#include "cref/text/perturbation.hpp"

namespace cref {

struct DiscriminatorConfig {
  std::size_t input_dim = 0;
  std::size_t hidden_dim = 0;  // 0 means input_dim
  std::size_t classes = kPerturbationCount;
  double dropout = 0.2;
  double batch_norm_momentum = 0.1;
  double batch_norm_eps = 1e-5;
};

// FC -> BatchNorm -> PReLU -> Dropout -> FC, mapping pooled stacks (n x d)
// to perturbation-kind logits (n x classes).
class Discriminator {
 public:
  Discriminator(const DiscriminatorConfig& config, std::uint64_t seed);

  // Training mode normalizes with batch statistics and folds them into the
  // running estimates; eval mode uses the running estimates.
  Tensor forward(const Tensor& pooled, const ForwardContext& ctx = {});

  ParameterList parameters() const;
  const DiscriminatorConfig& config() const { return config_; }
  const std::vector<real>& running_mean() const { return running_mean_; }
  const std::vector<real>& running_var() const { return running_var_; }

 private:
  DiscriminatorConfig config_;
  Tensor w1_, b1_, gamma_, beta_, slope_, w2_, b2_;
  std::vector<real> running_mean_, running_var_;
};

}  // namespace cref
