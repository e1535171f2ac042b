#pragma once

#include <cstddef>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "cref/encoder/encoder.hpp"

namespace cref {

// How token positions of two stacks are paired for windowing.
enum class Alignment {
  // Positions are indices into the filtered token list, so a stack with an
  // extra leading perturbation token lines up with its target.
  Compacted,
  // Positions are row indices, shifted back by one when row 1 holds a
  // perturbation token.
  RawOffset,
};

std::string_view alignment_name(Alignment a);
Alignment parse_alignment(std::string_view name);

struct ScoreConfig {
  std::size_t window_radius = 2;
  // Keep [CLS], [SEP] and perturbation tokens; [PAD] is always dropped.
  bool include_special = false;
  Alignment alignment = Alignment::Compacted;

  nlohmann::ordered_json to_json() const;
  static ScoreConfig from_json(const nlohmann::json& j);
  bool operator==(const ScoreConfig&) const = default;
};

struct EligibleRows {
  std::vector<std::size_t> rows;
  std::vector<long> positions;
};

EligibleRows eligible_rows(const TokenSequence& seq, const ScoreConfig& cfg);

struct ScoreParts {
  Tensor precision;
  Tensor recall;
  Tensor f1;
};

// Greedy cosine matching restricted to |i - j| <= radius, aggregated as F1.
// A position whose window is empty contributes 0. Throws if either stack has
// no eligible rows or the widths differ.
ScoreParts windowed_bertscore_parts(const EmbeddingStack& a, const EmbeddingStack& b,
                                    const ScoreConfig& cfg = {});
Tensor windowed_bertscore(const EmbeddingStack& a, const EmbeddingStack& b,
                          const ScoreConfig& cfg = {});

// Mean of the eligible rows, (dim).
Tensor pooled_embedding(const EmbeddingStack& s, const ScoreConfig& cfg = {});

}  // namespace cref
