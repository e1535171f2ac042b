#pragma once

#include <array>
#include <optional>
#include <string>
#include <string_view>

namespace cref {

enum class PerturbationKind : int {
  Identical = 0,
  Tense,
  Number,
  Gender,
  Voice,
  RelClause,
  Adverb,
  Synonym,
};

inline constexpr std::size_t kPerturbationCount = 8;

inline constexpr std::array<PerturbationKind, kPerturbationCount> kAllPerturbations{
    PerturbationKind::Identical, PerturbationKind::Tense,     PerturbationKind::Number,
    PerturbationKind::Gender,    PerturbationKind::Voice,     PerturbationKind::RelClause,
    PerturbationKind::Adverb,    PerturbationKind::Synonym,
};

inline constexpr int index_of(PerturbationKind kind) { return static_cast<int>(kind); }

// "TENSE", "SYNONYM", ...
std::string_view perturbation_name(PerturbationKind kind);
// "[TENSE]", "[SYNONYM]", ...
std::string perturbation_token(PerturbationKind kind);
std::optional<PerturbationKind> parse_perturbation(std::string_view name);

}  // namespace cref
