#include "cref/text/tokenizer.hpp"

#include <algorithm>
#include <cctype>

namespace cref {

std::vector<std::string> split_words(std::string_view text) {
  std::vector<std::string> out;
  std::string word;
  auto flush = [&] {
    if (!word.empty()) out.push_back(std::move(word));
    word.clear();
  };
  for (char raw : text) {
    const auto c = static_cast<unsigned char>(raw);
    if (std::isalnum(c) || c == '\'' || c >= 0x80) {
      word.push_back(static_cast<char>(std::tolower(c)));
    } else if (std::isspace(c)) {
      flush();
    } else {
      flush();
      out.emplace_back(1, raw);
    }
  }
  flush();
  return out;
}

Tokenizer::Tokenizer(Vocabulary vocab, std::size_t max_length)
    : vocab_(std::move(vocab)), max_length_(max_length) {
  if (max_length_ < 3) throw std::invalid_argument("tokenizer: max length must be >= 3");
}

TokenSequence Tokenizer::encode(std::string_view text) const {
  const auto words = split_words(text);
  if (words.empty()) throw std::invalid_argument("tokenizer: empty text");
  return encode_words(words);
}

TokenSequence Tokenizer::encode_words(std::span<const std::string> words) const {
  std::vector<int> body;
  body.reserve(words.size());
  for (const auto& w : words) body.push_back(w == kSlotMarker ? Vocabulary::kMask : vocab_.id(w));
  return wrap(body);
}

TokenSequence Tokenizer::wrap(std::span<const int> body) const {
  if (body.empty()) throw std::invalid_argument("tokenizer: empty token list");
  const std::size_t needed = body.size() + 2;
  if (needed > max_length_)
    throw SequenceOverflow("tokenizer: sequence of " + std::to_string(needed) +
                               " tokens exceeds max length " + std::to_string(max_length_) +
                               " by " + std::to_string(needed - max_length_),
                           needed - max_length_);
  TokenSequence seq;
  seq.ids.assign(max_length_, Vocabulary::kPad);
  seq.ids[0] = Vocabulary::kCls;
  std::copy(body.begin(), body.end(), seq.ids.begin() + 1);
  seq.ids[body.size() + 1] = Vocabulary::kSep;
  seq.length = needed;
  return seq;
}

TokenSequence Tokenizer::prepend_perturbation(const TokenSequence& seq,
                                              PerturbationKind kind) const {
  if (seq.length + 1 > seq.max_length())
    throw SequenceOverflow("tokenizer: no room to prepend " + perturbation_token(kind) +
                               " to a full sequence of " + std::to_string(seq.length),
                           1);
  TokenSequence out = seq;
  out.ids[1] = Vocabulary::perturbation_id(kind);
  std::copy(seq.ids.begin() + 1, seq.ids.begin() + static_cast<std::ptrdiff_t>(seq.length),
            out.ids.begin() + 2);
  out.length = seq.length + 1;
  return out;
}

}  // namespace cref
