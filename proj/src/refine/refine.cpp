#include "cref/refine/refine.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <numeric>
#include <stdexcept>
#include <string>

#include "cref/core/ops.hpp"
#include "cref/core/optim.hpp"

namespace cref {

std::string_view target_mode_name(TargetMode m) {
  return m == TargetMode::FrozenInit ? "frozen-init" : "stop-gradient-current";
}

TargetMode parse_target_mode(std::string_view name) {
  if (name == "frozen-init") return TargetMode::FrozenInit;
  if (name == "stop-gradient-current") return TargetMode::StopGradientCurrent;
  throw std::invalid_argument("unknown target mode '" + std::string(name) +
                              "' (expected frozen-init or stop-gradient-current)");
}

void RefinementConfig::validate() const {
  auto fail = [](const std::string& what) { throw std::invalid_argument("refine config: " + what); };
  if (batch_size == 0) fail("batch_size must be positive");
  if (perturbations_per_sample == 0) fail("perturbations_per_sample must be positive");
  if (!(learning_rate > 0)) fail("lr must be positive");
  if (!(adam_epsilon > 0)) fail("adam_eps must be positive");
  if (weight_decay < 0) fail("weight_decay must be non-negative");
  if (!(discriminator_dropout >= 0 && discriminator_dropout < 1)) fail("discriminator_dropout must lie in [0, 1)");
  if (!(probability_clamp > 0 && probability_clamp < 0.5)) fail("probability_clamp must lie in (0, 0.5)");
}

nlohmann::ordered_json RefinementConfig::to_json() const {
  nlohmann::ordered_json j;
  j["epochs"] = epochs;
  j["batch_size"] = batch_size;
  j["perturbations_per_sample"] = perturbations_per_sample;
  j["lr"] = learning_rate;
  j["adam_eps"] = adam_epsilon;
  j["weight_decay"] = weight_decay;
  j["warmup_steps"] = warmup_steps;
  j["seed"] = seed;
  j["target_mode"] = target_mode_name(target_mode);
  j["discriminator_hidden"] = discriminator_hidden;
  j["discriminator_dropout"] = discriminator_dropout;
  j["probability_clamp"] = probability_clamp;
  j["reinit_perturbation_embeddings"] = reinit_perturbation_embeddings;
  return j;
}

RefinementConfig RefinementConfig::from_json(const nlohmann::json& j) {
  RefinementConfig c;
  c.epochs = j.value("epochs", c.epochs);
  c.batch_size = j.value("batch_size", c.batch_size);
  c.perturbations_per_sample = j.value("perturbations_per_sample", c.perturbations_per_sample);
  c.learning_rate = j.value("lr", c.learning_rate);
  c.adam_epsilon = j.value("adam_eps", c.adam_epsilon);
  c.weight_decay = j.value("weight_decay", c.weight_decay);
  c.warmup_steps = j.value("warmup_steps", c.warmup_steps);
  c.seed = j.value("seed", c.seed);
  if (j.contains("target_mode")) c.target_mode = parse_target_mode(j["target_mode"].get<std::string>());
  c.discriminator_hidden = j.value("discriminator_hidden", c.discriminator_hidden);
  c.discriminator_dropout = j.value("discriminator_dropout", c.discriminator_dropout);
  c.probability_clamp = j.value("probability_clamp", c.probability_clamp);
  c.reinit_perturbation_embeddings =
      j.value("reinit_perturbation_embeddings", c.reinit_perturbation_embeddings);
  return c;
}

RefinementConfig bert_row_config() { return RefinementConfig{}; }
LossWeights bert_row_weights() { return LossWeights{130.0, 0.5, 2.5}; }

RefinementConfig roberta_row_config() {
  RefinementConfig c;
  c.epochs = 5;
  c.adam_epsilon = 1e-5;
  return c;
}
LossWeights roberta_row_weights() { return LossWeights{1.25, 7.25, 6.255}; }

double RefineResult::epoch_mean_total(std::size_t epoch) const {
  double total = 0;
  std::size_t n = 0;
  for (const auto& s : log)
    if (s.epoch == epoch) {
      total += s.total;
      ++n;
    }
  if (n == 0) throw std::out_of_range("no logged steps in epoch " + std::to_string(epoch));
  return total / static_cast<double>(n);
}

std::vector<PreparedGroup> prepare_groups(const std::vector<PerturbedGroup>& corpus,
                                          const Tokenizer& tokenizer, RefineResult* result) {
  std::vector<PreparedGroup> out;
  for (std::size_t g = 0; g < corpus.size(); ++g) {
    PreparedGroup pg;
    pg.index = g;
    try {
      pg.base = tokenizer.encode(corpus[g].base);
      (void)tokenizer.prepend_perturbation(pg.base, PerturbationKind::Identical);
    } catch (const SequenceOverflow&) {
      if (result) ++result->skipped_groups;
      continue;
    }
    pg.targets.emplace_back(PerturbationKind::Identical, pg.base);
    for (const auto& [kind, text] : corpus[g].variants) {
      try {
        pg.targets.emplace_back(kind, tokenizer.encode(text));
      } catch (const SequenceOverflow&) {
        if (result) ++result->skipped_variants;
      }
    }
    out.push_back(std::move(pg));
  }
  return out;
}

RefinementPair generate_pair(const EncoderModel& model, const Tokenizer& tokenizer,
                             const PerturbedGroup& group, PerturbationKind kind,
                             const ForwardContext& ctx, const EncoderModel* target_model) {
  const std::string* target_text = group.sentence_for(kind);
  if (!target_text)
    throw std::invalid_argument("group '" + group.id + "' has no " +
                                std::string(perturbation_name(kind)) + " variant");
  const TokenSequence base = tokenizer.encode(group.base);
  RefinementPair pair;
  pair.kind = kind;
  {
    NoGradGuard no_grad;
    const EncoderModel& tm = target_model ? *target_model : model;
    pair.target = tm.encode(tokenizer.encode(*target_text));
  }
  pair.generated = model.encode(tokenizer.prepend_perturbation(base, kind), ctx);
  return pair;
}

Discriminator make_discriminator(const EncoderModel& model, const RefinementConfig& config) {
  DiscriminatorConfig dc;
  dc.input_dim = model.config().model_dim;
  dc.hidden_dim = config.discriminator_hidden;
  dc.dropout = config.discriminator_dropout;
  return Discriminator(dc, config.seed ^ 0x9e3779b97f4a7c15ULL);
}

RefineResult refine(EncoderModel& model, Discriminator& discriminator,
                    const std::vector<PerturbedGroup>& corpus, const Tokenizer& tokenizer,
                    const LossWeights& weights, const RefinementConfig& config,
                    const ScoreConfig& score, const RefineCallback& on_step) {
  weights.validate();
  config.validate();
  if (corpus.empty()) throw std::invalid_argument("refine: empty corpus");
  if (discriminator.config().input_dim != model.config().model_dim)
    throw std::invalid_argument("refine: discriminator input width does not match the encoder");

  RefineResult result;
  const std::vector<PreparedGroup> groups = prepare_groups(corpus, tokenizer, &result);
  const bool any_variant = std::any_of(groups.begin(), groups.end(),
                                       [](const PreparedGroup& g) { return g.targets.size() > 1; });
  if (!any_variant) throw std::invalid_argument("refine: corpus has no usable variant sentences");

  Rng rng(config.seed);
  if (config.reinit_perturbation_embeddings) {
    Rng init = rng.fork();
    model.reinit_perturbation_embeddings(init);
  }

  // Frozen targets are computed once, from a snapshot of the starting model.
  std::vector<std::vector<EmbeddingStack>> frozen(groups.size());
  if (config.target_mode == TargetMode::FrozenInit) {
    NoGradGuard no_grad;
    const EncoderModel snapshot = model.clone();
    for (std::size_t g = 0; g < groups.size(); ++g)
      for (const auto& [kind, seq] : groups[g].targets) frozen[g].push_back(snapshot.encode(seq));
  }

  ParameterList params = model.encoder_parameters();
  if (weights.gamma > 0)
    for (auto& p : discriminator.parameters()) params.push_back(p);
  AdamWConfig oc;
  oc.learning_rate = static_cast<real>(config.learning_rate);
  oc.epsilon = static_cast<real>(config.adam_epsilon);
  oc.weight_decay = static_cast<real>(config.weight_decay);
  oc.warmup_steps = config.warmup_steps;
  AdamW opt(params, oc);

  const ForwardContext train{.training = true, .rng = &rng};
  std::vector<std::size_t> order(groups.size());
  std::iota(order.begin(), order.end(), std::size_t{0});

  for (std::size_t epoch = 0; epoch < config.epochs; ++epoch) {
    rng.shuffle(order);
    for (std::size_t start = 0; start < order.size(); start += config.batch_size) {
      const std::size_t end = std::min(order.size(), start + config.batch_size);
      std::vector<RefinementPair> pairs;
      for (std::size_t b = start; b < end; ++b) {
        const std::size_t g = order[b];
        const PreparedGroup& pg = groups[g];
        std::vector<std::size_t> pool(pg.targets.size());
        std::iota(pool.begin(), pool.end(), std::size_t{0});
        rng.shuffle(pool);
        pool.resize(std::min(pool.size(), config.perturbations_per_sample));
        std::sort(pool.begin(), pool.end());
        for (std::size_t t : pool) {
          const auto& [kind, target_seq] = pg.targets[t];
          RefinementPair pair;
          pair.sample = g;
          pair.kind = kind;
          if (config.target_mode == TargetMode::FrozenInit) {
            pair.target = frozen[g][t];
          } else {
            NoGradGuard no_grad;
            pair.target = model.encode(target_seq);
          }
          pair.generated = model.encode(tokenizer.prepend_perturbation(pg.base, kind), train);
          pairs.push_back(std::move(pair));
        }
      }
      LossTerms terms = refinement_losses(pairs, &discriminator, weights, score, train,
                                          config.probability_clamp);
      // A lone sample with only the contrastive term has nothing to train.
      if (!terms.total.requires_grad()) continue;
      RefineStep step;
      step.epoch = epoch;
      step.reconstruction = terms.reconstruction.item();
      step.contrastive = terms.contrastive.item();
      step.diversity = terms.diversity.item();
      step.total = terms.total.item();
      backward(terms.total);
      step.learning_rate = opt.step();
      step.step = opt.steps_taken();
      result.log.push_back(step);
      if (on_step) on_step(step, pairs);
    }
  }
  return result;
}

namespace {

std::vector<real> pooled_values(const EncoderModel& model, const TokenSequence& seq,
                                const ScoreConfig& score) {
  const Tensor p = pooled_embedding(model.encode(seq), score);
  return {p.values().begin(), p.values().end()};
}

}  // namespace

ProbeReport no_collapse_probes(const EncoderModel& model, const std::vector<PerturbedGroup>& corpus,
                               const Tokenizer& tokenizer, const ScoreConfig& score,
                               std::uint64_t seed) {
  const std::vector<PreparedGroup> groups = prepare_groups(corpus, tokenizer);
  if (groups.size() < 4) throw std::invalid_argument("probes: need at least 4 usable groups");
  const std::size_t d = model.config().model_dim, K = kPerturbationCount;

  // features[g][k] = pooled generated stack of group g under kind k.
  std::vector<std::vector<std::vector<real>>> features(groups.size());
  {
    NoGradGuard no_grad;
    for (std::size_t g = 0; g < groups.size(); ++g)
      for (auto kind : kAllPerturbations)
        features[g].push_back(
            pooled_values(model, tokenizer.prepend_perturbation(groups[g].base, kind), score));
  }

  ProbeReport report;
  report.min_same_kind_distance = std::numeric_limits<double>::infinity();
  for (std::size_t k = 0; k < K; ++k)
    for (std::size_t a = 0; a < groups.size(); ++a)
      for (std::size_t b = a + 1; b < groups.size(); ++b) {
        double dist = 0;
        for (std::size_t c = 0; c < d; ++c) {
          const double diff = features[a][k][c] - features[b][k][c];
          dist += diff * diff;
        }
        report.min_same_kind_distance = std::min(report.min_same_kind_distance, std::sqrt(dist));
      }

  Rng rng(seed);
  std::vector<std::size_t> order(groups.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  rng.shuffle(order);
  const std::size_t n_train = std::max<std::size_t>(1, (groups.size() * 7) / 10);

  // Standardize with training statistics.
  std::vector<double> mu(d, 0), sd(d, 0);
  for (std::size_t i = 0; i < n_train; ++i)
    for (std::size_t k = 0; k < K; ++k)
      for (std::size_t c = 0; c < d; ++c) mu[c] += features[order[i]][k][c];
  for (auto& m : mu) m /= static_cast<double>(n_train * K);
  for (std::size_t i = 0; i < n_train; ++i)
    for (std::size_t k = 0; k < K; ++k)
      for (std::size_t c = 0; c < d; ++c) {
        const double z = features[order[i]][k][c] - mu[c];
        sd[c] += z * z;
      }
  for (auto& s : sd) s = std::sqrt(s / static_cast<double>(n_train * K)) + 1e-12;

  auto design = [&](std::size_t from, std::size_t to, std::vector<int>& labels) {
    std::vector<real> x;
    for (std::size_t i = from; i < to; ++i)
      for (std::size_t k = 0; k < K; ++k) {
        for (std::size_t c = 0; c < d; ++c)
          x.push_back(static_cast<real>((features[order[i]][k][c] - mu[c]) / sd[c]));
        labels.push_back(static_cast<int>(k));
      }
    return Tensor::matrix(labels.size(), d, std::move(x));
  };
  std::vector<int> train_labels, test_labels;
  const Tensor x_train = design(0, n_train, train_labels);
  const Tensor x_test = design(n_train, groups.size(), test_labels);
  report.train_examples = train_labels.size();
  report.test_examples = test_labels.size();

  Tensor w = Tensor::parameter({d, K}, std::vector<real>(d * K, 0));
  Tensor b = Tensor::parameter({K}, std::vector<real>(K, 0));
  AdamWConfig oc;
  oc.learning_rate = 0.05;
  oc.weight_decay = 0;
  AdamW opt({{"probe.weight", w}, {"probe.bias", b}}, oc);
  for (int it = 0; it < 300; ++it) {
    backward(cross_entropy(add_row(matmul(x_train, w), b), train_labels));
    opt.step();
  }
  if (test_labels.empty()) return report;
  NoGradGuard no_grad;
  const Tensor logits = add_row(matmul(x_test, w), b);
  std::size_t correct = 0;
  for (std::size_t r = 0; r < test_labels.size(); ++r) {
    std::size_t best = 0;
    for (std::size_t k = 1; k < K; ++k)
      if (logits.at(r, k) > logits.at(r, best)) best = k;
    if (static_cast<int>(best) == test_labels[r]) ++correct;
  }
  report.kind_accuracy = static_cast<double>(correct) / static_cast<double>(test_labels.size());
  return report;
}

}  // namespace cref
