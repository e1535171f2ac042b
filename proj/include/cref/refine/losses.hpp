#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "cref/refine/discriminator.hpp"
#include "cref/score/windowed_score.hpp"
#include "cref/text/perturbation.hpp"

namespace cref {

struct LossWeights {
  double alpha = 130.0;
  double beta = 0.5;
  double gamma = 2.5;

  // Throws unless all weights are non-negative and one is positive.
  void validate() const;
  nlohmann::ordered_json to_json() const;
  static LossWeights from_json(const nlohmann::json& j);
  bool operator==(const LossWeights&) const = default;
};

// One (sample, kind) training pair: the stop-gradient target stack of the
// perturbed sentence and the stack generated from base + kind token.
struct RefinementPair {
  std::size_t sample = 0;
  PerturbationKind kind = PerturbationKind::Identical;
  EmbeddingStack target;
  EmbeddingStack generated;
};

// -alpha * sum over pairs of score(target, generated).
Tensor reconstruction_loss(std::span<const RefinementPair> pairs, double alpha,
                           const ScoreConfig& score = {});

// beta * sum over ordered pairs (i, j), i != j, of the same kind of
// score(generated_i, generated_j). Each unordered pair is scored once and
// counted twice, since the score is symmetric.
Tensor contrastive_loss(std::span<const RefinementPair> pairs, double beta,
                        const ScoreConfig& score = {});

inline constexpr double kDefaultProbabilityClamp = 1e-7;

// -gamma * sum of log[q(k) / sum_{t != k} q(t)] over rows of the
// discriminator logits, with kinds as the row targets.
Tensor diversity_loss_from_logits(const Tensor& logits, std::span<const PerturbationKind> kinds,
                                  double gamma, double clamp = kDefaultProbabilityClamp);

// Pools each generated stack, runs the discriminator, applies the above.
Tensor diversity_loss(std::span<const RefinementPair> pairs, Discriminator& discriminator,
                      double gamma, const ScoreConfig& score = {}, const ForwardContext& ctx = {},
                      double clamp = kDefaultProbabilityClamp);

struct LossTerms {
  Tensor reconstruction;
  Tensor contrastive;
  Tensor diversity;
  Tensor total;
};

// All three terms and their sum. A term whose weight is zero is a constant 0
// and is not computed; the discriminator may then be null.
LossTerms refinement_losses(std::span<const RefinementPair> pairs, Discriminator* discriminator,
                            const LossWeights& weights, const ScoreConfig& score = {},
                            const ForwardContext& ctx = {},
                            double clamp = kDefaultProbabilityClamp);

}  // namespace cref
