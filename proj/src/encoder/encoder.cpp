#include "cref/encoder/encoder.hpp"

#include <numeric>
#include <stdexcept>
#include <string>

#include "cref/core/checkpoint.hpp"
#include "cref/core/ops.hpp"
#include "cref/text/vocabulary.hpp"

namespace cref {
namespace {

constexpr double kInitStd = 0.02;

Tensor normal_param(Shape shape, Rng& rng) {
  std::vector<real> v(element_count(shape));
  for (auto& x : v) x = static_cast<real>(rng.normal(0.0, kInitStd));
  return Tensor::parameter(std::move(shape), std::move(v));
}

Tensor const_param(Shape shape, real value) {
  std::vector<real> v(element_count(shape), value);
  return Tensor::parameter(std::move(shape), std::move(v));
}

Tensor linear(const Tensor& x, const Tensor& w, const Tensor& b) { return add_row(matmul(x, w), b); }

Tensor maybe_dropout(const Tensor& x, const ForwardContext& ctx, double rate) {
  if (!ctx.training || rate <= 0.0) return x;
  if (!ctx.rng) throw std::invalid_argument("training forward pass needs an rng");
  return dropout(x, static_cast<real>(rate), *ctx.rng);
}

}  // namespace

void EncoderConfig::validate() const {
  auto fail = [](const std::string& what) { throw std::invalid_argument("encoder config: " + what); };
  if (heads == 0) fail("heads must be positive");
  if (model_dim == 0) fail("model_dim must be positive");
  if (ff_dim == 0) fail("ff_dim must be positive");
  if (model_dim % heads != 0)
    fail("model_dim " + std::to_string(model_dim) + " is not divisible by heads " +
         std::to_string(heads));
  if (max_len < 3) fail("max_len must be at least 3");
  if (vocab_size <= static_cast<std::size_t>(Vocabulary::kFirstWord))
    fail("vocab_size " + std::to_string(vocab_size) + " leaves no room for words");
  if (!(dropout >= 0.0 && dropout < 1.0)) fail("dropout must lie in [0, 1)");
}

nlohmann::ordered_json EncoderConfig::to_json() const {
  nlohmann::ordered_json j;
  j["layers"] = layers;
  j["heads"] = heads;
  j["model_dim"] = model_dim;
  j["ff_dim"] = ff_dim;
  j["max_len"] = max_len;
  j["vocab_size"] = vocab_size;
  j["dropout"] = dropout;
  j["tie_embeddings"] = tie_embeddings;
  return j;
}

EncoderConfig EncoderConfig::from_json(const nlohmann::json& j) {
  EncoderConfig c;
  c.layers = j.value("layers", c.layers);
  c.heads = j.value("heads", c.heads);
  c.model_dim = j.value("model_dim", c.model_dim);
  c.ff_dim = j.value("ff_dim", c.ff_dim);
  c.max_len = j.value("max_len", c.max_len);
  c.vocab_size = j.value("vocab_size", c.vocab_size);
  c.dropout = j.value("dropout", c.dropout);
  c.tie_embeddings = j.value("tie_embeddings", c.tie_embeddings);
  return c;
}

Tensor MaskedLanguageModel::mlm_logits(const TokenSequence& seq) const {
  std::vector<std::size_t> all(seq.max_length());
  std::iota(all.begin(), all.end(), std::size_t{0});
  return mlm_logits_at(seq, all);
}

EncoderModel::EncoderModel(const EncoderConfig& config, std::uint64_t seed)
    : EncoderModel(config, Rng(seed)) {}

EncoderModel::EncoderModel(const EncoderConfig& config, Rng&& rng) : config_(config) {
  config_.validate();
  const std::size_t d = config_.model_dim, f = config_.ff_dim, v = config_.vocab_size;
  token_embedding_ = normal_param({v, d}, rng);
  position_embedding_ = normal_param({config_.max_len, d}, rng);
  layers_.resize(config_.layers);
  for (auto& l : layers_) {
    l.ln1_gain = const_param({d}, 1);
    l.ln1_bias = const_param({d}, 0);
    l.wq = normal_param({d, d}, rng);
    l.bq = const_param({d}, 0);
    l.wk = normal_param({d, d}, rng);
    l.bk = const_param({d}, 0);
    l.wv = normal_param({d, d}, rng);
    l.bv = const_param({d}, 0);
    l.wo = normal_param({d, d}, rng);
    l.bo = const_param({d}, 0);
    l.ln2_gain = const_param({d}, 1);
    l.ln2_bias = const_param({d}, 0);
    l.w1 = normal_param({d, f}, rng);
    l.b1 = const_param({f}, 0);
    l.w2 = normal_param({f, d}, rng);
    l.b2 = const_param({d}, 0);
  }
  final_gain_ = const_param({d}, 1);
  final_bias_ = const_param({d}, 0);
  head_w_ = normal_param({d, d}, rng);
  head_b_ = const_param({d}, 0);
  head_ln_gain_ = const_param({d}, 1);
  head_ln_bias_ = const_param({d}, 0);
  if (!config_.tie_embeddings) decoder_ = normal_param({v, d}, rng);
  decoder_bias_ = const_param({v}, 0);
}

void EncoderModel::check_ids(const TokenSequence& seq) const {
  if (seq.length == 0 || seq.length > seq.ids.size())
    throw std::invalid_argument("encoder: sequence length " + std::to_string(seq.length) +
                                " is invalid for " + std::to_string(seq.ids.size()) + " ids");
  if (seq.ids.size() != config_.max_len)
    throw std::invalid_argument("encoder: sequence has " + std::to_string(seq.ids.size()) +
                                " slots, model expects " + std::to_string(config_.max_len));
  for (std::size_t i = 0; i < seq.length; ++i)
    if (seq.ids[i] < 0 || static_cast<std::size_t>(seq.ids[i]) >= config_.vocab_size)
      throw std::out_of_range("encoder: token id " + std::to_string(seq.ids[i]) + " at position " +
                              std::to_string(i) + " is outside vocabulary of " +
                              std::to_string(config_.vocab_size));
}

Tensor EncoderModel::hidden_states(const TokenSequence& seq, const ForwardContext& ctx) const {
  check_ids(seq);
  const std::size_t n = seq.length;
  std::vector<int> positions(n);
  std::iota(positions.begin(), positions.end(), 0);
  Tensor x = add(embedding_lookup(token_embedding_, seq.real_ids()),
                 embedding_lookup(position_embedding_, positions));
  x = maybe_dropout(x, ctx, config_.dropout);
  for (const auto& l : layers_) {
    Tensor h = layer_norm(x, l.ln1_gain, l.ln1_bias);
    Tensor a = attention(linear(h, l.wq, l.bq), linear(h, l.wk, l.bk), linear(h, l.wv, l.bv),
                         config_.heads);
    x = add(x, maybe_dropout(linear(a, l.wo, l.bo), ctx, config_.dropout));
    h = layer_norm(x, l.ln2_gain, l.ln2_bias);
    Tensor ff = linear(gelu(linear(h, l.w1, l.b1)), l.w2, l.b2);
    x = add(x, maybe_dropout(ff, ctx, config_.dropout));
  }
  return layer_norm(x, final_gain_, final_bias_);
}

EmbeddingStack EncoderModel::encode(const TokenSequence& seq, const ForwardContext& ctx) const {
  return {pad_rows(hidden_states(seq, ctx), config_.max_len), seq};
}

Tensor EncoderModel::head(const Tensor& hidden_rows) const {
  Tensor t = layer_norm(gelu(linear(hidden_rows, head_w_, head_b_)), head_ln_gain_, head_ln_bias_);
  const Tensor& table = config_.tie_embeddings ? token_embedding_ : decoder_;
  return add_row(matmul_nt(t, table), decoder_bias_);
}

Tensor EncoderModel::mlm_logits_at(const TokenSequence& seq, std::span<const std::size_t> positions,
                                   const ForwardContext& ctx) const {
  for (std::size_t p : positions)
    if (p >= config_.max_len)
      throw std::out_of_range("encoder: position " + std::to_string(p) + " beyond max_len " +
                              std::to_string(config_.max_len));
  Tensor h = hidden_states(seq, ctx);
  // Positions past the real tokens see a zero hidden row.
  bool all_real = true;
  for (std::size_t p : positions) all_real = all_real && p < seq.length;
  if (!all_real) h = pad_rows(h, config_.max_len);
  return head(gather_rows(h, positions));
}

ParameterList EncoderModel::encoder_parameters() const {
  ParameterList out{{"embeddings.token", token_embedding_},
                    {"embeddings.position", position_embedding_}};
  for (std::size_t i = 0; i < layers_.size(); ++i) {
    const auto& l = layers_[i];
    const std::string p = "layers." + std::to_string(i) + ".";
    out.push_back({p + "attn_norm.gain", l.ln1_gain});
    out.push_back({p + "attn_norm.bias", l.ln1_bias});
    out.push_back({p + "attn.query.weight", l.wq});
    out.push_back({p + "attn.query.bias", l.bq});
    out.push_back({p + "attn.key.weight", l.wk});
    out.push_back({p + "attn.key.bias", l.bk});
    out.push_back({p + "attn.value.weight", l.wv});
    out.push_back({p + "attn.value.bias", l.bv});
    out.push_back({p + "attn.output.weight", l.wo});
    out.push_back({p + "attn.output.bias", l.bo});
    out.push_back({p + "ffn_norm.gain", l.ln2_gain});
    out.push_back({p + "ffn_norm.bias", l.ln2_bias});
    out.push_back({p + "ffn.in.weight", l.w1});
    out.push_back({p + "ffn.in.bias", l.b1});
    out.push_back({p + "ffn.out.weight", l.w2});
    out.push_back({p + "ffn.out.bias", l.b2});
  }
  out.push_back({"final_norm.gain", final_gain_});
  out.push_back({"final_norm.bias", final_bias_});
  return out;
}

ParameterList EncoderModel::head_parameters() const {
  ParameterList out{{"mlm_head.dense.weight", head_w_},
                    {"mlm_head.dense.bias", head_b_},
                    {"mlm_head.norm.gain", head_ln_gain_},
                    {"mlm_head.norm.bias", head_ln_bias_}};
  if (!config_.tie_embeddings) out.push_back({"mlm_head.decoder.weight", decoder_});
  out.push_back({"mlm_head.decoder.bias", decoder_bias_});
  return out;
}

ParameterList EncoderModel::parameters() const {
  ParameterList out = encoder_parameters();
  for (auto& p : head_parameters()) out.push_back(std::move(p));
  return out;
}

void EncoderModel::reinit_perturbation_embeddings(Rng& rng) {
  auto values = token_embedding_.mutable_values();
  const std::size_t d = config_.model_dim;
  for (int id = Vocabulary::kFirstPerturbation; id < Vocabulary::kFirstWord; ++id)
    for (std::size_t c = 0; c < d; ++c)
      values[static_cast<std::size_t>(id) * d + c] = static_cast<real>(rng.normal(0.0, kInitStd));
}

EncoderModel EncoderModel::clone() const {
  EncoderModel copy(config_, 0);
  restore_parameters(snapshot_parameters(parameters()), copy.parameters());
  return copy;
}

void EncoderModel::save(const std::filesystem::path& path, nlohmann::json metadata) const {
  metadata["encoder_config"] = config_.to_json();
  write_checkpoint(path, snapshot_parameters(parameters(), std::move(metadata)));
}

EncoderModel EncoderModel::load(const std::filesystem::path& path, nlohmann::json* metadata) {
  const Checkpoint ckpt = read_checkpoint(path);
  if (!ckpt.metadata.contains("encoder_config"))
    throw std::runtime_error(path.string() + ": checkpoint carries no encoder_config");
  EncoderModel model(EncoderConfig::from_json(ckpt.metadata["encoder_config"]), 0);
  restore_parameters(ckpt, model.parameters());
  if (metadata) *metadata = ckpt.metadata;
  return model;
}

}  // namespace cref
