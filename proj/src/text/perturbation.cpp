#include "cref/text/perturbation.hpp"

namespace cref {
namespace {

constexpr std::array<std::string_view, kPerturbationCount> kNames{
    "IDENTICAL", "TENSE", "NUMBER", "GENDER", "VOICE", "RELCLAUSE", "ADVERB", "SYNONYM",
};

}  // namespace

std::string_view perturbation_name(PerturbationKind kind) {
  return kNames[static_cast<std::size_t>(index_of(kind))];
}

std::string perturbation_token(PerturbationKind kind) {
  return "[" + std::string(perturbation_name(kind)) + "]";
}

std::optional<PerturbationKind> parse_perturbation(std::string_view name) {
  for (std::size_t i = 0; i < kNames.size(); ++i)
    if (kNames[i] == name) return kAllPerturbations[i];
  return std::nullopt;
}

}  // namespace cref
