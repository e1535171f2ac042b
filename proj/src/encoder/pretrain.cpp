#include "cref/encoder/pretrain.hpp"

#include <numeric>
#include <stdexcept>

#include "cref/core/ops.hpp"
#include "cref/text/vocabulary.hpp"

namespace cref {

MaskedExample mask_for_mlm(const TokenSequence& seq, std::size_t vocab_size, double select_prob,
                           Rng& rng) {
  if (vocab_size <= static_cast<std::size_t>(Vocabulary::kFirstWord))
    throw std::invalid_argument("mask_for_mlm: vocabulary has no words");
  MaskedExample ex{seq, {}, {}};
  const std::size_t words = vocab_size - Vocabulary::kFirstWord;
  for (std::size_t i = 0; i < seq.length; ++i) {
    if (!Vocabulary::is_word(seq.ids[i])) continue;
    if (!rng.bernoulli(select_prob)) continue;
    ex.positions.push_back(i);
    ex.targets.push_back(seq.ids[i]);
    const double r = rng.uniform();
    if (r < 0.8)
      ex.input.ids[i] = Vocabulary::kMask;
    else if (r < 0.9)
      ex.input.ids[i] = Vocabulary::kFirstWord + static_cast<int>(rng.index(words));
  }
  return ex;
}

nlohmann::ordered_json PretrainConfig::to_json() const {
  nlohmann::ordered_json j;
  j["epochs"] = epochs;
  j["batch_size"] = batch_size;
  j["select_prob"] = select_prob;
  j["learning_rate"] = optimizer.learning_rate;
  j["beta1"] = optimizer.beta1;
  j["beta2"] = optimizer.beta2;
  j["epsilon"] = optimizer.epsilon;
  j["weight_decay"] = optimizer.weight_decay;
  j["warmup_steps"] = optimizer.warmup_steps;
  j["seed"] = seed;
  return j;
}

PretrainConfig PretrainConfig::from_json(const nlohmann::json& j) {
  PretrainConfig c;
  c.epochs = j.value("epochs", c.epochs);
  c.batch_size = j.value("batch_size", c.batch_size);
  c.select_prob = j.value("select_prob", c.select_prob);
  c.optimizer.learning_rate = j.value("learning_rate", c.optimizer.learning_rate);
  c.optimizer.beta1 = j.value("beta1", c.optimizer.beta1);
  c.optimizer.beta2 = j.value("beta2", c.optimizer.beta2);
  c.optimizer.epsilon = j.value("epsilon", c.optimizer.epsilon);
  c.optimizer.weight_decay = j.value("weight_decay", c.optimizer.weight_decay);
  c.optimizer.warmup_steps = j.value("warmup_steps", c.optimizer.warmup_steps);
  c.seed = j.value("seed", c.seed);
  return c;
}

std::vector<PretrainStep> pretrain_mlm(EncoderModel& model, const std::vector<TokenSequence>& corpus,
                                       const PretrainConfig& config,
                                       const PretrainCallback& on_step) {
  if (corpus.empty()) throw std::invalid_argument("pretrain: empty corpus");
  if (config.batch_size == 0) throw std::invalid_argument("pretrain: batch_size must be positive");
  if (!(config.select_prob > 0.0 && config.select_prob <= 1.0))
    throw std::invalid_argument("pretrain: select_prob must lie in (0, 1]");
  bool any_word = false;
  for (const auto& s : corpus)
    for (std::size_t i = 0; i < s.length; ++i) any_word = any_word || Vocabulary::is_word(s.ids[i]);
  if (!any_word) throw std::invalid_argument("pretrain: corpus contains no word tokens");

  Rng rng(config.seed);
  AdamW opt(model.parameters(), config.optimizer);
  const ForwardContext ctx{.training = true, .rng = &rng};
  std::vector<std::size_t> order(corpus.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::vector<PretrainStep> log;

  for (std::size_t epoch = 0; epoch < config.epochs; ++epoch) {
    rng.shuffle(order);
    for (std::size_t start = 0; start < order.size(); start += config.batch_size) {
      const std::size_t end = std::min(order.size(), start + config.batch_size);
      std::vector<MaskedExample> batch;
      std::size_t selected = 0;
      for (std::size_t b = start; b < end; ++b) {
        batch.push_back(mask_for_mlm(corpus[order[b]], model.vocab_size(), config.select_prob, rng));
        selected += batch.back().positions.size();
      }
      if (selected == 0) continue;

      Tensor loss;
      for (const auto& ex : batch) {
        if (ex.positions.empty()) continue;
        Tensor ce = cross_entropy(model.mlm_logits_at(ex.input, ex.positions, ctx), ex.targets);
        Tensor part = scale(ce, static_cast<real>(ex.positions.size()) / static_cast<real>(selected));
        loss = loss.defined() ? add(loss, part) : part;
      }
      const double value = loss.item();
      backward(loss);
      const real lr = opt.step();
      log.push_back({opt.steps_taken(), static_cast<double>(lr), value});
      if (on_step) on_step(log.back());
    }
  }
  return log;
}

double masked_token_accuracy(const MaskedLanguageModel& model,
                             const std::vector<TokenSequence>& corpus) {
  NoGradGuard no_grad;
  std::size_t total = 0, correct = 0;
  for (const auto& seq : corpus) {
    for (std::size_t i = 0; i < seq.length; ++i) {
      if (!Vocabulary::is_word(seq.ids[i])) continue;
      TokenSequence masked = seq;
      masked.ids[i] = Vocabulary::kMask;
      const std::size_t pos[] = {i};
      const Tensor logits = model.mlm_logits_at(masked, pos);
      const auto row = logits.values();
      std::size_t best = 0;
      for (std::size_t v = 1; v < row.size(); ++v)
        if (row[v] > row[best]) best = v;
      ++total;
      if (static_cast<int>(best) == seq.ids[i]) ++correct;
    }
  }
  if (total == 0) throw std::invalid_argument("masked_token_accuracy: no word positions");
  return static_cast<double>(correct) / static_cast<double>(total);
}

}  // namespace cref
