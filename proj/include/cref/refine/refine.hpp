#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <string_view>
#include <vector>

#include "cref/refine/losses.hpp"
#include "cref/text/corpus.hpp"

namespace cref {

enum class TargetMode {
  // Targets come from a frozen copy of the model taken before refinement.
  FrozenInit,
  // Targets come from the model being refined, without gradient.
  StopGradientCurrent,
};

std::string_view target_mode_name(TargetMode m);
TargetMode parse_target_mode(std::string_view name);

struct RefinementConfig {
  std::size_t epochs = 10;
  std::size_t batch_size = 10;
  std::size_t perturbations_per_sample = 4;
  double learning_rate = 5e-5;
  double adam_epsilon = 1e-8;
  double weight_decay = 0.01;
  std::size_t warmup_steps = 500;
  std::uint64_t seed = 0;
  TargetMode target_mode = TargetMode::FrozenInit;
  std::size_t discriminator_hidden = 0;  // 0 means the model width
  double discriminator_dropout = 0.2;
  double probability_clamp = kDefaultProbabilityClamp;
  // Redraw the perturbation-token embeddings before training.
  bool reinit_perturbation_embeddings = true;

  void validate() const;
  nlohmann::ordered_json to_json() const;
  static RefinementConfig from_json(const nlohmann::json& j);
};

// Hyperparameter presets for BERT- and RoBERTa-style encoders; anything not
// listed keeps the RefinementConfig default.
RefinementConfig bert_row_config();
LossWeights bert_row_weights();
RefinementConfig roberta_row_config();
LossWeights roberta_row_weights();

struct RefineStep {
  std::size_t step = 0;
  std::size_t epoch = 0;
  double learning_rate = 0;
  double reconstruction = 0;
  double contrastive = 0;
  double diversity = 0;
  double total = 0;
};

struct RefineResult {
  std::vector<RefineStep> log;
  std::size_t skipped_groups = 0;   // base sentence did not fit with a kind token
  std::size_t skipped_variants = 0; // variant sentence did not tokenize within max_len

  double epoch_mean_total(std::size_t epoch) const;
};

// Receives each logged step together with the batch it was computed on.
using RefineCallback = std::function<void(const RefineStep&, std::span<const RefinementPair>)>;

// A tokenized group: base sentence and the variants available as targets.
struct PreparedGroup {
  std::size_t index = 0;
  TokenSequence base;
  std::vector<std::pair<PerturbationKind, TokenSequence>> targets;  // Identical first
};

// Tokenizes the corpus; groups whose base cannot take a kind token are
// dropped and variants that overflow are skipped, both counted in `result`.
std::vector<PreparedGroup> prepare_groups(const std::vector<PerturbedGroup>& corpus,
                                          const Tokenizer& tokenizer, RefineResult* result = nullptr);

// Target and generated stacks for one (group, kind). The target never
// carries gradient; generated follows ctx.
RefinementPair generate_pair(const EncoderModel& model, const Tokenizer& tokenizer,
                             const PerturbedGroup& group, PerturbationKind kind,
                             const ForwardContext& ctx = {},
                             const EncoderModel* target_model = nullptr);

// Jointly minimizes the weighted losses over the encoder and discriminator.
// Throws when all weights are zero or the corpus has no variant sentences.
RefineResult refine(EncoderModel& model, Discriminator& discriminator,
                    const std::vector<PerturbedGroup>& corpus, const Tokenizer& tokenizer,
                    const LossWeights& weights, const RefinementConfig& config,
                    const ScoreConfig& score = {}, const RefineCallback& on_step = {});

// Builds the discriminator refine expects for this model and config.
Discriminator make_discriminator(const EncoderModel& model, const RefinementConfig& config);

struct ProbeReport {
  double kind_accuracy = 0;  // held-out accuracy of a linear kind probe
  double chance = 1.0 / kPerturbationCount;
  double min_same_kind_distance = 0;
  std::size_t train_examples = 0;
  std::size_t test_examples = 0;
};

// Encodes base + kind token for every group and all kinds, then fits a
// softmax-regression probe on the pooled stacks of 70% of the groups and
// measures it on the rest; also reports the smallest distance between
// pooled stacks of different groups under the same kind.
ProbeReport no_collapse_probes(const EncoderModel& model, const std::vector<PerturbedGroup>& corpus,
                               const Tokenizer& tokenizer, const ScoreConfig& score,
                               std::uint64_t seed);

}  // namespace cref
