#include "cref/refine/losses.hpp"

#include <stdexcept>
#include <string>

#include "cref/core/ops.hpp"

namespace cref {
namespace {

Tensor accumulate(Tensor acc, const Tensor& term) { return acc.defined() ? add(acc, term) : term; }

Tensor zero() { return Tensor::scalar(0); }

}  // namespace

void LossWeights::validate() const {
  if (alpha < 0 || beta < 0 || gamma < 0)
    throw std::invalid_argument("loss weights must be non-negative (alpha=" + std::to_string(alpha) +
                                ", beta=" + std::to_string(beta) + ", gamma=" + std::to_string(gamma) + ")");
  if (alpha == 0 && beta == 0 && gamma == 0)
    throw std::invalid_argument("loss weights alpha, beta and gamma are all zero");
}

nlohmann::ordered_json LossWeights::to_json() const {
  nlohmann::ordered_json j;
  j["alpha"] = alpha;
  j["beta"] = beta;
  j["gamma"] = gamma;
  return j;
}

LossWeights LossWeights::from_json(const nlohmann::json& j) {
  LossWeights w;
  w.alpha = j.value("alpha", w.alpha);
  w.beta = j.value("beta", w.beta);
  w.gamma = j.value("gamma", w.gamma);
  return w;
}

Tensor reconstruction_loss(std::span<const RefinementPair> pairs, double alpha, const ScoreConfig& score) {
  if (pairs.empty()) throw std::invalid_argument("reconstruction_loss: no pairs");
  if (alpha == 0) return zero();
  Tensor total;
  for (const auto& p : pairs) total = accumulate(total, windowed_bertscore(p.target, p.generated, score));
  return scale(total, static_cast<real>(-alpha));
}

Tensor contrastive_loss(std::span<const RefinementPair> pairs, double beta, const ScoreConfig& score) {
  if (beta == 0) return zero();
  Tensor total;
  for (std::size_t a = 0; a < pairs.size(); ++a)
    for (std::size_t b = a + 1; b < pairs.size(); ++b) {
      if (pairs[a].kind != pairs[b].kind || pairs[a].sample == pairs[b].sample) continue;
      total = accumulate(total, windowed_bertscore(pairs[a].generated, pairs[b].generated, score));
    }
  if (!total.defined()) return zero();
  return scale(total, static_cast<real>(2 * beta));
}

Tensor diversity_loss_from_logits(const Tensor& logits, std::span<const PerturbationKind> kinds,
                                  double gamma, double clamp) {
  if (gamma == 0) return zero();
  std::vector<int> targets;
  targets.reserve(kinds.size());
  for (auto k : kinds) targets.push_back(index_of(k));
  return scale(sum(log_odds_against_rest(logits, targets, static_cast<real>(clamp))),
               static_cast<real>(-gamma));
}

Tensor diversity_loss(std::span<const RefinementPair> pairs, Discriminator& discriminator, double gamma,
                      const ScoreConfig& score, const ForwardContext& ctx, double clamp) {
  if (pairs.empty()) throw std::invalid_argument("diversity_loss: no pairs");
  if (gamma == 0) return zero();
  std::vector<Tensor> pooled;
  std::vector<PerturbationKind> kinds;
  for (const auto& p : pairs) {
    pooled.push_back(pooled_embedding(p.generated, score));
    kinds.push_back(p.kind);
  }
  return diversity_loss_from_logits(discriminator.forward(stack_rows(pooled), ctx), kinds, gamma, clamp);
}

LossTerms refinement_losses(std::span<const RefinementPair> pairs, Discriminator* discriminator,
                            const LossWeights& weights, const ScoreConfig& score,
                            const ForwardContext& ctx, double clamp) {
  weights.validate();
  if (pairs.empty()) throw std::invalid_argument("refinement_losses: no pairs");
  if (weights.gamma > 0 && !discriminator)
    throw std::invalid_argument("refinement_losses: gamma > 0 needs a discriminator");
  LossTerms t;
  t.reconstruction = reconstruction_loss(pairs, weights.alpha, score);
  t.contrastive = contrastive_loss(pairs, weights.beta, score);
  t.diversity = weights.gamma > 0
                    ? diversity_loss(pairs, *discriminator, weights.gamma, score, ctx, clamp)
                    : zero();
  t.total = add(add(t.reconstruction, t.contrastive), t.diversity);
  return t;
}

}  // namespace cref
