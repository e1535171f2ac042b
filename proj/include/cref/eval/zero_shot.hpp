#pragma once

#include <cstddef>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "cref/encoder/encoder.hpp"
#include "cref/text/corpus.hpp"

namespace cref {

struct CandidateScore {
  int candidate = 1;
  // Mean log-probability of the candidate tokens at their masked slots;
  // -infinity when the expanded sentence does not fit.
  double log_prob = 0;
  std::size_t tokens = 0;
  std::optional<std::string> warning;
};

// Expands the slot to one [MASK] per candidate token and averages the
// log-softmax probabilities of those tokens from a single forward pass.
CandidateScore score_candidate(const MaskedLanguageModel& model, const Tokenizer& tokenizer,
                               const std::string& sentence, const SchemaInstance& instance, int which);
CandidateScore score_candidate(const MaskedLanguageModel& model, const Tokenizer& tokenizer,
                               const SchemaInstance& instance, int which);

// Higher score wins; exact ties go to candidate 1.
int resolve(const CandidateScore& first, const CandidateScore& second);
int resolve(const MaskedLanguageModel& model, const Tokenizer& tokenizer, const SchemaInstance& instance);

struct Decision {
  std::size_t instance = 0;  // line index in the dataset
  bool twin = false;         // scored sentence is the instance's twin
  int gold = 1;
  int chosen = 1;
  double score1 = 0;
  double score2 = 0;
  bool correct() const { return gold == chosen; }
};

struct EvalReport {
  std::string dataset;
  std::size_t count = 0;
  std::size_t correct = 0;
  double accuracy = 0;
  std::vector<Decision> decisions;
  std::vector<std::string> warnings;

  nlohmann::ordered_json to_json() const;
  // One row per decision.
  std::string to_csv() const;
};

// Scores every sentence (twins as separate items whose gold answer is the
// other candidate) in parallel; the model is only read.
EvalReport evaluate(const MaskedLanguageModel& model, const Tokenizer& tokenizer,
                    const std::vector<SchemaInstance>& dataset, const std::string& name);

// Round-trip-exact decimal rendering used in reports (inf as "-inf").
std::string format_real(double v);

}  // namespace cref
