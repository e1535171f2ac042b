#pragma once

#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include <json.hpp>

#include "cref/text/perturbation.hpp"

namespace cref {

// Dense token ids: reserved specials, one id per perturbation kind, then
// words in sorted order.
class Vocabulary {
 public:
  static constexpr int kPad = 0;
  static constexpr int kCls = 1;
  static constexpr int kSep = 2;
  static constexpr int kMask = 3;
  static constexpr int kUnk = 4;
  static constexpr int kFirstPerturbation = 5;
  static constexpr int kFirstWord = kFirstPerturbation + static_cast<int>(kPerturbationCount);

  Vocabulary();

  // Collects the word tokens of `texts`; the pronoun slot marker is skipped.
  static Vocabulary build(std::span<const std::string> texts);
  static Vocabulary from_json(const nlohmann::json& j);
  static Vocabulary load(const std::filesystem::path& path);

  nlohmann::ordered_json to_json() const;
  std::string serialize() const;
  void save(const std::filesystem::path& path) const;

  std::size_t size() const { return tokens_.size(); }
  std::size_t word_count() const { return tokens_.size() - kFirstWord; }
  // [UNK] for unknown tokens.
  int id(std::string_view token) const;
  bool contains(std::string_view token) const;
  const std::string& token(int id) const;

  static constexpr int perturbation_id(PerturbationKind kind) {
    return kFirstPerturbation + index_of(kind);
  }
  static bool is_special(int id) { return id >= 0 && id < kFirstPerturbation; }
  static bool is_perturbation(int id) { return id >= kFirstPerturbation && id < kFirstWord; }
  static bool is_word(int id) { return id >= kFirstWord; }
  static std::optional<PerturbationKind> kind_of(int id);

  bool operator==(const Vocabulary& other) const { return tokens_ == other.tokens_; }

 private:
  void add(std::string token);

  std::vector<std::string> tokens_;
  std::unordered_map<std::string, int> ids_;
};

}  // namespace cref
