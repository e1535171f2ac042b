#include "cref/score/windowed_score.hpp"

#include <stdexcept>
#include <string>

#include "cref/core/ops.hpp"
#include "cref/text/vocabulary.hpp"

namespace cref {

std::string_view alignment_name(Alignment a) {
  return a == Alignment::Compacted ? "compacted" : "raw_offset";
}

Alignment parse_alignment(std::string_view name) {
  if (name == "compacted") return Alignment::Compacted;
  if (name == "raw_offset") return Alignment::RawOffset;
  throw std::invalid_argument("unknown alignment '" + std::string(name) +
                              "' (expected compacted or raw_offset)");
}

nlohmann::ordered_json ScoreConfig::to_json() const {
  nlohmann::ordered_json j;
  j["window_radius"] = window_radius;
  j["include_special"] = include_special;
  j["alignment"] = alignment_name(alignment);
  return j;
}

ScoreConfig ScoreConfig::from_json(const nlohmann::json& j) {
  ScoreConfig c;
  if (j.contains("window_radius")) {
    if (j["window_radius"].is_number_integer() && j["window_radius"].get<long long>() < 0)
      throw std::invalid_argument("score.window_radius must be non-negative");
    c.window_radius = j["window_radius"].get<std::size_t>();
  }
  c.include_special = j.value("include_special", c.include_special);
  if (j.contains("alignment")) c.alignment = parse_alignment(j["alignment"].get<std::string>());
  return c;
}

EligibleRows eligible_rows(const TokenSequence& seq, const ScoreConfig& cfg) {
  EligibleRows out;
  const long offset =
      seq.length > 1 && Vocabulary::is_perturbation(seq.ids[1]) ? 1 : 0;
  for (std::size_t i = 0; i < seq.length; ++i) {
    const int id = seq.ids[i];
    if (id == Vocabulary::kPad) continue;
    if (!cfg.include_special && !Vocabulary::is_word(id) && id != Vocabulary::kMask &&
        id != Vocabulary::kUnk)
      continue;
    out.rows.push_back(i);
    out.positions.push_back(cfg.alignment == Alignment::Compacted
                                ? static_cast<long>(out.positions.size())
                                : static_cast<long>(i) - offset);
  }
  return out;
}

ScoreParts windowed_bertscore_parts(const EmbeddingStack& a, const EmbeddingStack& b,
                                    const ScoreConfig& cfg) {
  if (a.dim() != b.dim())
    throw ShapeError("windowed_bertscore: embedding widths differ (" + shape_string(a.hidden.shape()) +
                     " vs " + shape_string(b.hidden.shape()) + ")");
  const EligibleRows ea = eligible_rows(a.source, cfg), eb = eligible_rows(b.source, cfg);
  if (ea.rows.empty() || eb.rows.empty())
    throw std::invalid_argument("windowed_bertscore: a stack has no eligible tokens");
  const Tensor sim =
      matmul_nt(normalize_rows(gather_rows(a.hidden, ea.rows)), normalize_rows(gather_rows(b.hidden, eb.rows)));
  Tensor p = mean(windowed_max(sim, ea.positions, eb.positions, cfg.window_radius, 1));
  Tensor r = mean(windowed_max(sim, ea.positions, eb.positions, cfg.window_radius, 0));
  Tensor f = f1_combine(p, r);
  return {p, r, f};
}

Tensor windowed_bertscore(const EmbeddingStack& a, const EmbeddingStack& b, const ScoreConfig& cfg) {
  return windowed_bertscore_parts(a, b, cfg).f1;
}

Tensor pooled_embedding(const EmbeddingStack& s, const ScoreConfig& cfg) {
  const EligibleRows e = eligible_rows(s.source, cfg);
  if (e.rows.empty()) throw std::invalid_argument("pooled_embedding: no eligible tokens");
  return mean_rows(gather_rows(s.hidden, e.rows));
}

}  // namespace cref
