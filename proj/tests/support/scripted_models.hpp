#pragma once

// Stand-in masked LMs with scripted or pseudo-random logits.

#include <functional>
#include <span>
#include <vector>

#include <stdexcept>

#include "cref/core/rng.hpp"
#include "cref/encoder/encoder.hpp"

namespace cref::testing {

// Logits at each masked position are produced by a callback that sees the
// whole sequence and the index of the position within the query.
class ScriptedModel : public MaskedLanguageModel {
 public:
  using Row = std::function<std::vector<real>(const TokenSequence&, std::size_t)>;
  ScriptedModel(std::size_t vocab, Row row) : vocab_(vocab), row_(std::move(row)) {}
  std::size_t vocab_size() const override { return vocab_; }
  Tensor mlm_logits_at(const TokenSequence& seq, std::span<const std::size_t> positions,
                       const ForwardContext& = {}) const override {
    std::vector<real> out;
    for (std::size_t j = 0; j < positions.size(); ++j) {
      auto r = row_(seq, j);
      if (r.size() != vocab_) throw std::logic_error("scripted row has the wrong width");
      out.insert(out.end(), r.begin(), r.end());
    }
    return Tensor::matrix(positions.size(), vocab_, std::move(out));
  }

 private:
  std::size_t vocab_;
  Row row_;
};

// Pseudo-random logits keyed on the whole sequence and position.
class HashModel : public MaskedLanguageModel {
 public:
  HashModel(std::size_t vocab, std::uint64_t salt) : vocab_(vocab), salt_(salt) {}
  std::size_t vocab_size() const override { return vocab_; }
  Tensor mlm_logits_at(const TokenSequence& seq, std::span<const std::size_t> positions,
                       const ForwardContext& = {}) const override {
    std::uint64_t h = salt_;
    for (int id : seq.real_ids()) h = (h ^ static_cast<std::uint64_t>(id)) * 0x100000001b3ULL;
    std::vector<real> out;
    for (std::size_t p : positions) {
      Rng rng(h ^ (p * 0x9e3779b97f4a7c15ULL));
      for (std::size_t v = 0; v < vocab_; ++v) out.push_back(rng.normal(0, 3));
    }
    return Tensor::matrix(positions.size(), vocab_, std::move(out));
  }

 private:
  std::size_t vocab_;
  std::uint64_t salt_;
};

}  // namespace cref::testing
