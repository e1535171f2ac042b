#include "cref/text/corpus.hpp"

#include <algorithm>
#include <cctype>
#include <fstream>
#include <set>
#include <vector>

#include <json.hpp>

namespace cref {
namespace {

using nlohmann::json;

// Parses one line, rejecting duplicate keys inside any object.
json parse_strict(const std::string& line, const std::string& source, std::size_t lineno) {
  std::vector<std::set<std::string>> keys;
  std::string duplicate;
  auto cb = [&](int, json::parse_event_t event, json& parsed) {
    switch (event) {
      case json::parse_event_t::object_start:
        keys.emplace_back();
        break;
      case json::parse_event_t::object_end:
        keys.pop_back();
        break;
      case json::parse_event_t::key: {
        auto k = parsed.get<std::string>();
        if (!keys.back().insert(k).second && duplicate.empty()) duplicate = k;
        break;
      }
      default:
        break;
    }
    return true;
  };
  json j;
  try {
    j = json::parse(line, cb);
  } catch (const json::parse_error& e) {
    throw FormatError(source, lineno, std::string("invalid JSON: ") + e.what());
  }
  if (!duplicate.empty()) throw FormatError(source, lineno, "duplicate key '" + duplicate + "'");
  if (!j.is_object()) throw FormatError(source, lineno, "expected a JSON object");
  return j;
}

std::string required_string(const json& j, const char* field, const std::string& source,
                            std::size_t lineno) {
  auto it = j.find(field);
  if (it == j.end()) throw FormatError(source, lineno, std::string("missing field '") + field + "'");
  if (!it->is_string())
    throw FormatError(source, lineno, std::string("field '") + field + "' must be a string");
  auto s = it->get<std::string>();
  if (split_words(s).empty())
    throw FormatError(source, lineno, std::string("field '") + field + "' is empty");
  return s;
}

bool blank(const std::string& line) {
  return std::all_of(line.begin(), line.end(), [](unsigned char c) { return std::isspace(c); });
}

std::size_t slot_count(const std::string& text) {
  const auto words = split_words(text);
  return static_cast<std::size_t>(std::count(words.begin(), words.end(), kSlotMarker));
}

template <class Fn>
void for_each_line(std::istream& in, Fn&& fn) {
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (blank(line)) continue;
    fn(line, lineno);
  }
}

std::ifstream open(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  return in;
}

}  // namespace

FormatError::FormatError(const std::string& source, std::size_t line, const std::string& what)
    : std::runtime_error(source + ":" + std::to_string(line) + ": " + what), line_(line) {}

const std::string* PerturbedGroup::sentence_for(PerturbationKind kind) const {
  if (kind == PerturbationKind::Identical) return &base;
  auto it = variants.find(kind);
  return it == variants.end() ? nullptr : &it->second;
}

CorpusLoad parse_perturbation_corpus(std::istream& in, const std::string& source) {
  CorpusLoad load;
  std::set<std::string> ids;
  for_each_line(in, [&](const std::string& line, std::size_t lineno) {
    const json j = parse_strict(line, source, lineno);
    PerturbedGroup g;
    g.id = required_string(j, "id", source, lineno);
    g.base = required_string(j, "base", source, lineno);
    if (!ids.insert(g.id).second)
      throw FormatError(source, lineno, "duplicate group id '" + g.id + "'");
    if (auto it = j.find("variants"); it != j.end()) {
      if (!it->is_object()) throw FormatError(source, lineno, "field 'variants' must be an object");
      for (const auto& [key, value] : it->items()) {
        auto kind = parse_perturbation(key);
        if (!kind) {
          ++load.skipped_unknown_keys;
          continue;
        }
        if (*kind == PerturbationKind::Identical)
          throw FormatError(source, lineno, "IDENTICAL is implied by 'base' and cannot be a variant");
        if (!value.is_string() || split_words(value.get<std::string>()).empty())
          throw FormatError(source, lineno, "variant '" + key + "' must be a non-empty string");
        g.variants.emplace(*kind, value.get<std::string>());
      }
    }
    load.groups.push_back(std::move(g));
  });
  return load;
}

CorpusLoad load_perturbation_corpus(const std::filesystem::path& path) {
  auto in = open(path);
  return parse_perturbation_corpus(in, path.string());
}

std::string to_json_line(const PerturbedGroup& group) {
  nlohmann::ordered_json j;
  j["id"] = group.id;
  j["base"] = group.base;
  j["variants"] = nlohmann::ordered_json::object();
  for (const auto& [kind, text] : group.variants) j["variants"][std::string(perturbation_name(kind))] = text;
  return j.dump();
}

std::vector<SchemaInstance> parse_benchmark(std::istream& in, const std::string& source) {
  std::vector<SchemaInstance> out;
  for_each_line(in, [&](const std::string& line, std::size_t lineno) {
    const json j = parse_strict(line, source, lineno);
    SchemaInstance s;
    s.sentence = required_string(j, "sentence", source, lineno);
    s.candidate1 = required_string(j, "candidate1", source, lineno);
    s.candidate2 = required_string(j, "candidate2", source, lineno);
    auto label = j.find("label");
    if (label == j.end()) throw FormatError(source, lineno, "missing field 'label'");
    if (!label->is_number_integer() || (label->get<int>() != 1 && label->get<int>() != 2))
      throw FormatError(source, lineno, "field 'label' must be 1 or 2");
    s.label = label->get<int>();
    if (j.contains("twin")) s.twin = required_string(j, "twin", source, lineno);

    if (slot_count(s.sentence) != 1)
      throw FormatError(source, lineno, "field 'sentence' must contain exactly one '_' slot");
    if (s.twin && slot_count(*s.twin) != 1)
      throw FormatError(source, lineno, "field 'twin' must contain exactly one '_' slot");
    if (split_words(s.candidate1) == split_words(s.candidate2))
      throw FormatError(source, lineno, "candidates must differ");
    if (slot_count(s.candidate1) || slot_count(s.candidate2))
      throw FormatError(source, lineno, "candidates must not contain the slot marker");
    out.push_back(std::move(s));
  });
  return out;
}

std::vector<SchemaInstance> load_benchmark(const std::filesystem::path& path) {
  auto in = open(path);
  return parse_benchmark(in, path.string());
}

std::string to_json_line(const SchemaInstance& instance) {
  nlohmann::ordered_json j;
  j["sentence"] = instance.sentence;
  j["candidate1"] = instance.candidate1;
  j["candidate2"] = instance.candidate2;
  j["label"] = instance.label;
  if (instance.twin) j["twin"] = *instance.twin;
  return j.dump();
}

std::vector<IdenticalVariant> find_identical_variants(const std::vector<PerturbedGroup>& groups,
                                                      const Tokenizer& tokenizer) {
  std::vector<IdenticalVariant> out;
  for (const auto& g : groups) {
    const auto base = tokenizer.encode(g.base);
    for (const auto& [kind, text] : g.variants)
      if (tokenizer.encode(text) == base) out.push_back({g.id, kind});
  }
  return out;
}

std::vector<std::string> collect_texts(const std::vector<PerturbedGroup>& groups) {
  std::vector<std::string> out;
  for (const auto& g : groups) {
    out.push_back(g.base);
    for (const auto& [kind, text] : g.variants) out.push_back(text);
  }
  return out;
}

std::vector<std::string> collect_texts(const std::vector<SchemaInstance>& instances) {
  std::vector<std::string> out;
  for (const auto& s : instances) {
    out.push_back(s.sentence);
    out.push_back(s.candidate1);
    out.push_back(s.candidate2);
    if (s.twin) out.push_back(*s.twin);
  }
  return out;
}

}  // namespace cref
