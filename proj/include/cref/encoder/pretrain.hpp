#pragma once

#include <cstdint>
#include <functional>
#include <vector>

#include "cref/core/optim.hpp"
#include "cref/encoder/encoder.hpp"

namespace cref {

struct MaskedExample {
  TokenSequence input;
  std::vector<std::size_t> positions;  // selected positions, ascending
  std::vector<int> targets;            // original ids at those positions
};

// Selects each word position with probability select_prob; a selected
// position becomes [MASK] (80%), a random word (10%) or stays (10%).
// Special and perturbation tokens are never selected.
MaskedExample mask_for_mlm(const TokenSequence& seq, std::size_t vocab_size, double select_prob,
                           Rng& rng);

struct PretrainConfig {
  std::size_t epochs = 30;
  std::size_t batch_size = 16;
  double select_prob = 0.15;
  AdamWConfig optimizer{.learning_rate = 1e-3, .warmup_steps = 50};
  std::uint64_t seed = 0;

  nlohmann::ordered_json to_json() const;
  static PretrainConfig from_json(const nlohmann::json& j);
};

struct PretrainStep {
  std::size_t step;
  double learning_rate;
  double loss;
};

using PretrainCallback = std::function<void(const PretrainStep&)>;

// Trains every parameter of `model` in place; returns the per-step log.
// Throws on an empty corpus.
std::vector<PretrainStep> pretrain_mlm(EncoderModel& model, const std::vector<TokenSequence>& corpus,
                                       const PretrainConfig& config,
                                       const PretrainCallback& on_step = {});

// Masks every word position of every sequence one at a time and counts how
// often the argmax prediction restores the original token.
double masked_token_accuracy(const MaskedLanguageModel& model,
                             const std::vector<TokenSequence>& corpus);

}  // namespace cref
