#pragma once

// JSON-lines ingestion.
//
// Perturbation corpus, one object per line:
//   {"id": "wsc-17", "base": "...", "variants": {"TENSE": "...", "SYNONYM": "..."}}
// Benchmark, one object per line (literal "_" marks the pronoun slot):
//   {"sentence": "...", "candidate1": "...", "candidate2": "...", "label": 1|2,
//    "twin": "..."}   // twin optional

#include <cstddef>
#include <filesystem>
#include <istream>
#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "cref/text/perturbation.hpp"
#include "cref/text/tokenizer.hpp"

namespace cref {

class FormatError : public std::runtime_error {
 public:
  FormatError(const std::string& source, std::size_t line, const std::string& what);
  std::size_t line() const { return line_; }

 private:
  std::size_t line_;
};

struct PerturbedGroup {
  std::string id;
  std::string base;
  std::map<PerturbationKind, std::string> variants;  // never holds Identical

  // Identical maps to the base sentence itself.
  const std::string* sentence_for(PerturbationKind kind) const;
  bool operator==(const PerturbedGroup&) const = default;
};

struct CorpusLoad {
  std::vector<PerturbedGroup> groups;
  std::size_t skipped_unknown_keys = 0;
};

CorpusLoad parse_perturbation_corpus(std::istream& in, const std::string& source = "<stream>");
CorpusLoad load_perturbation_corpus(const std::filesystem::path& path);
std::string to_json_line(const PerturbedGroup& group);

struct SchemaInstance {
  std::string sentence;
  std::string candidate1;
  std::string candidate2;
  int label = 1;
  // Trigger-flipped sentence; its gold answer is the other candidate.
  std::optional<std::string> twin;

  const std::string& candidate(int which) const { return which == 1 ? candidate1 : candidate2; }
  bool operator==(const SchemaInstance&) const = default;
};

std::vector<SchemaInstance> parse_benchmark(std::istream& in, const std::string& source = "<stream>");
std::vector<SchemaInstance> load_benchmark(const std::filesystem::path& path);
std::string to_json_line(const SchemaInstance& instance);

// Groups whose variant tokenizes identically to the base (warned, not fatal).
struct IdenticalVariant {
  std::string group_id;
  PerturbationKind kind;
};
std::vector<IdenticalVariant> find_identical_variants(const std::vector<PerturbedGroup>& groups,
                                                      const Tokenizer& tokenizer);

// Every text a vocabulary should cover.
std::vector<std::string> collect_texts(const std::vector<PerturbedGroup>& groups);
std::vector<std::string> collect_texts(const std::vector<SchemaInstance>& instances);

}  // namespace cref
