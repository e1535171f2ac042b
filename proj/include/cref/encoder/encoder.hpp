#pragma once

#include <cstddef>
#include <filesystem>
#include <memory>
#include <span>
#include <vector>

#include <json.hpp>

#include "cref/core/parameters.hpp"
#include "cref/core/rng.hpp"
#include "cref/core/tensor.hpp"
#include "cref/text/tokenizer.hpp"

namespace cref {

struct EncoderConfig {
  std::size_t layers = 4;
  std::size_t heads = 4;
  std::size_t model_dim = 128;
  std::size_t ff_dim = 512;
  std::size_t max_len = kDefaultMaxLength;
  std::size_t vocab_size = 0;
  double dropout = 0.1;
  bool tie_embeddings = true;

  // Throws std::invalid_argument describing the first bad field.
  void validate() const;
  nlohmann::ordered_json to_json() const;
  static EncoderConfig from_json(const nlohmann::json& j);
  bool operator==(const EncoderConfig&) const = default;
};

// Dropout is active only when training is set; it then draws from rng.
struct ForwardContext {
  bool training = false;
  Rng* rng = nullptr;
};

// Final-layer hidden states, (max_len x model_dim), with zero rows past the
// source sequence's length.
struct EmbeddingStack {
  Tensor hidden;
  TokenSequence source;

  std::size_t length() const { return source.length; }
  std::size_t rows() const { return hidden.rows(); }
  std::size_t dim() const { return hidden.cols(); }
};

// Anything that yields masked-token distributions.
class MaskedLanguageModel {
 public:
  virtual ~MaskedLanguageModel() = default;
  virtual std::size_t vocab_size() const = 0;
  // Logits (positions.size() x vocab) at the given positions of seq.
  virtual Tensor mlm_logits_at(const TokenSequence& seq, std::span<const std::size_t> positions,
                               const ForwardContext& ctx = {}) const = 0;
  // Logits at every position (max_len x vocab).
  Tensor mlm_logits(const TokenSequence& seq) const;
};

// Pre-norm transformer encoder with a masked-LM head.
class EncoderModel : public MaskedLanguageModel {
 public:
  // Normal(0, 0.02) weights, zero biases, unit norm gains.
  EncoderModel(const EncoderConfig& config, std::uint64_t seed);

  const EncoderConfig& config() const { return config_; }
  std::size_t vocab_size() const override { return config_.vocab_size; }

  // Hidden states of the real tokens only, (length x model_dim).
  Tensor hidden_states(const TokenSequence& seq, const ForwardContext& ctx = {}) const;
  EmbeddingStack encode(const TokenSequence& seq, const ForwardContext& ctx = {}) const;
  Tensor mlm_logits_at(const TokenSequence& seq, std::span<const std::size_t> positions,
                       const ForwardContext& ctx = {}) const override;
  // Head applied to hidden rows (k x model_dim) -> (k x vocab).
  Tensor head(const Tensor& hidden_rows) const;

  // Embeddings, layers and the final norm.
  ParameterList encoder_parameters() const;
  ParameterList head_parameters() const;
  ParameterList parameters() const;

  // Redraws the embedding rows of the perturbation tokens.
  void reinit_perturbation_embeddings(Rng& rng);

  EncoderModel clone() const;

  void save(const std::filesystem::path& path, nlohmann::json metadata = nlohmann::json::object()) const;
  static EncoderModel load(const std::filesystem::path& path, nlohmann::json* metadata = nullptr);

 private:
  struct Layer {
    Tensor ln1_gain, ln1_bias;
    Tensor wq, bq, wk, bk, wv, bv, wo, bo;
    Tensor ln2_gain, ln2_bias;
    Tensor w1, b1, w2, b2;
  };

  EncoderModel(const EncoderConfig& config, Rng&& rng);
  void check_ids(const TokenSequence& seq) const;

  EncoderConfig config_;
  Tensor token_embedding_, position_embedding_;
  std::vector<Layer> layers_;
  Tensor final_gain_, final_bias_;
  Tensor head_w_, head_b_, head_ln_gain_, head_ln_bias_, decoder_, decoder_bias_;
};

}  // namespace cref
