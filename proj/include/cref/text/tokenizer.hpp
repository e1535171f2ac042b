#pragma once

#include <cstddef>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "cref/text/vocabulary.hpp"

namespace cref {

inline constexpr std::size_t kDefaultMaxLength = 48;
inline constexpr std::string_view kSlotMarker = "_";

// Thrown when a sequence would not fit; carries how many tokens too many.
class SequenceOverflow : public std::length_error {
 public:
  SequenceOverflow(const std::string& what, std::size_t overflow)
      : std::length_error(what), overflow_(overflow) {}
  std::size_t overflow() const { return overflow_; }

 private:
  std::size_t overflow_;
};

// Lowercased word-level split: runs of letters, digits and apostrophes form
// words; every other non-space character is its own token.
std::vector<std::string> split_words(std::string_view text);

struct TokenSequence {
  std::vector<int> ids;  // max-length, [PAD]-filled tail
  std::size_t length = 0;

  std::span<const int> real_ids() const { return {ids.data(), length}; }
  bool attends(std::size_t pos) const { return pos < length; }
  std::size_t max_length() const { return ids.size(); }
  bool operator==(const TokenSequence&) const = default;
};

class Tokenizer {
 public:
  explicit Tokenizer(Vocabulary vocab, std::size_t max_length = kDefaultMaxLength);

  // [CLS] words... [SEP] [PAD]...; throws on empty text or overflow.
  TokenSequence encode(std::string_view text) const;
  TokenSequence encode_words(std::span<const std::string> words) const;
  // Wraps raw ids (already including no [CLS]/[SEP]).
  TokenSequence wrap(std::span<const int> body) const;

  // [CLS] [KIND] rest...; throws if the sequence is full.
  TokenSequence prepend_perturbation(const TokenSequence& seq, PerturbationKind kind) const;

  const Vocabulary& vocab() const { return vocab_; }
  std::size_t max_length() const { return max_length_; }

 private:
  Vocabulary vocab_;
  std::size_t max_length_;
};

}  // namespace cref
