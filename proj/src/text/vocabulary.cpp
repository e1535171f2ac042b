#include "cref/text/vocabulary.hpp"

#include <fstream>
#include <iterator>
#include <set>
#include <stdexcept>

#include "cref/text/tokenizer.hpp"

namespace cref {
namespace {

const std::array<std::string, 5> kSpecials{"[PAD]", "[CLS]", "[SEP]", "[MASK]", "[UNK]"};

}  // namespace

Vocabulary::Vocabulary() {
  for (const auto& s : kSpecials) add(s);
  for (PerturbationKind k : kAllPerturbations) add(perturbation_token(k));
}

void Vocabulary::add(std::string token) {
  const int id = static_cast<int>(tokens_.size());
  if (!ids_.emplace(token, id).second)
    throw std::invalid_argument("vocabulary: duplicate token '" + token + "'");
  tokens_.push_back(std::move(token));
}

Vocabulary Vocabulary::build(std::span<const std::string> texts) {
  std::set<std::string> words;
  for (const auto& text : texts)
    for (auto& w : split_words(text))
      if (w != kSlotMarker) words.insert(std::move(w));
  Vocabulary v;
  for (const auto& w : words)
    if (!v.contains(w)) v.add(w);
  return v;
}

Vocabulary Vocabulary::from_json(const nlohmann::json& j) {
  if (!j.is_object()) throw std::invalid_argument("vocabulary: expected a JSON object");
  std::vector<std::string> by_id(j.size());
  std::vector<bool> seen(j.size(), false);
  for (const auto& [token, value] : j.items()) {
    const auto id = value.get<long long>();
    if (id < 0 || static_cast<std::size_t>(id) >= by_id.size() || seen[id])
      throw std::invalid_argument("vocabulary: ids must be dense and unique (bad id " +
                                  std::to_string(id) + " for '" + token + "')");
    seen[id] = true;
    by_id[id] = token;
  }
  Vocabulary reference;
  for (std::size_t i = 0; i < reference.tokens_.size(); ++i)
    if (i >= by_id.size() || by_id[i] != reference.tokens_[i])
      throw std::invalid_argument("vocabulary: reserved id " + std::to_string(i) + " must be " +
                                  reference.tokens_[i]);
  Vocabulary v;
  for (std::size_t i = reference.tokens_.size(); i < by_id.size(); ++i) v.add(by_id[i]);
  return v;
}

Vocabulary Vocabulary::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open vocabulary " + path.string());
  return from_json(nlohmann::json::parse(in));
}

nlohmann::ordered_json Vocabulary::to_json() const {
  nlohmann::ordered_json j = nlohmann::ordered_json::object();
  for (std::size_t i = 0; i < tokens_.size(); ++i) j[tokens_[i]] = i;
  return j;
}

std::string Vocabulary::serialize() const { return to_json().dump(1) + "\n"; }

void Vocabulary::save(const std::filesystem::path& path) const {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write vocabulary " + path.string());
  out << serialize();
}

int Vocabulary::id(std::string_view token) const {
  auto it = ids_.find(std::string(token));
  return it == ids_.end() ? kUnk : it->second;
}

bool Vocabulary::contains(std::string_view token) const {
  return ids_.contains(std::string(token));
}

const std::string& Vocabulary::token(int id) const {
  if (id < 0 || static_cast<std::size_t>(id) >= tokens_.size())
    throw std::out_of_range("vocabulary: id " + std::to_string(id) + " out of range");
  return tokens_[id];
}

std::optional<PerturbationKind> Vocabulary::kind_of(int id) {
  if (!is_perturbation(id)) return std::nullopt;
  return kAllPerturbations[static_cast<std::size_t>(id - kFirstPerturbation)];
}

}  // namespace cref
