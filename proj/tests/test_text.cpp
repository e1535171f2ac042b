#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>

#include "cref/text/corpus.hpp"
#include "cref/text/tokenizer.hpp"

using namespace cref;

namespace {

Tokenizer small_tokenizer(std::size_t max_len = kDefaultMaxLength) {
  const std::vector<std::string> texts{"The trophy fits in the suitcase.", "w1 w2"};
  return Tokenizer(Vocabulary::build(texts), max_len);
}

std::filesystem::path temp_path(const std::string& name) {
  auto dir = std::filesystem::temp_directory_path() / "cref_text_tests";
  std::filesystem::create_directories(dir);
  return dir / name;
}

std::string read_file(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

}  // namespace

TEST_CASE("tokenize lowercases, splits punctuation, wraps and pads") {
  const Tokenizer tok = small_tokenizer(10);
  const auto& v = tok.vocab();
  const TokenSequence seq = tok.encode("The trophy fits.");
  const std::vector<int> expected{Vocabulary::kCls, v.id("the"), v.id("trophy"), v.id("fits"),
                                  v.id("."), Vocabulary::kSep, 0, 0, 0, 0};
  CHECK(seq.ids == expected);
  CHECK(seq.length == 6);
  CHECK(seq.attends(5));
  CHECK_FALSE(seq.attends(6));
  CHECK(v.token(seq.ids[1]) == "the");
}

TEST_CASE("tokenize rejects empty text and reports overflow") {
  const Tokenizer tok = small_tokenizer(6);
  CHECK_THROWS_AS(tok.encode(""), std::invalid_argument);
  CHECK_THROWS_AS(tok.encode("   "), std::invalid_argument);
  try {
    tok.encode("the trophy fits in the suitcase");
    FAIL("expected overflow");
  } catch (const SequenceOverflow& e) {
    CHECK(e.overflow() == 2);
  }
}

TEST_CASE("tokenize is deterministic and maps unknown words to UNK") {
  const Tokenizer tok = small_tokenizer();
  CHECK(tok.encode("The trophy fits.") == tok.encode("The trophy fits."));
  CHECK(tok.encode("zebra").ids[1] == Vocabulary::kUnk);
  CHECK(tok.encode("the _ fits").ids[2] == Vocabulary::kMask);
}

TEST_CASE("split_words keeps apostrophes and isolates symbols") {
  const std::vector<std::string> expected{"don't", ",", "it", "'s", "-", "ok"};
  CHECK(split_words("Don't, it 's - OK") == expected);
}

TEST_CASE("prepend places the kind token right after CLS") {
  const Tokenizer tok = small_tokenizer(8);
  const auto& v = tok.vocab();
  const TokenSequence seq = tok.encode("w1 w2");
  const TokenSequence syn = tok.prepend_perturbation(seq, PerturbationKind::Synonym);
  CHECK(syn.ids == std::vector<int>{1, v.id("[SYNONYM]"), v.id("w1"), v.id("w2"), 2, 0, 0, 0});
  CHECK(syn.length == seq.length + 1);
  const TokenSequence same = tok.prepend_perturbation(seq, PerturbationKind::Identical);
  CHECK(same.ids[1] == v.id("[IDENTICAL]"));
  CHECK(same.ids[2] == v.id("w1"));

  std::set<std::vector<int>> distinct;
  for (auto k : kAllPerturbations) distinct.insert(tok.prepend_perturbation(seq, k).ids);
  CHECK(distinct.size() == kPerturbationCount);
}

TEST_CASE("prepend onto a full sequence is rejected") {
  const Tokenizer tok = small_tokenizer(4);
  const TokenSequence full = tok.encode("w1 w2");
  CHECK(full.length == 4);
  CHECK_THROWS_AS(tok.prepend_perturbation(full, PerturbationKind::Tense), SequenceOverflow);
}

TEST_CASE("vocabulary layout") {
  const Vocabulary v = Vocabulary::build(std::vector<std::string>{"b a", "c a"});
  CHECK(v.size() == Vocabulary::kFirstWord + 3);
  CHECK(v.token(0) == "[PAD]");
  CHECK(v.token(Vocabulary::kMask) == "[MASK]");
  CHECK(v.id("a") == Vocabulary::kFirstWord);
  std::set<int> kinds;
  for (auto k : kAllPerturbations) {
    const int id = Vocabulary::perturbation_id(k);
    CHECK(v.token(id) == perturbation_token(k));
    CHECK(Vocabulary::is_perturbation(id));
    CHECK_FALSE(Vocabulary::is_word(id));
    CHECK(Vocabulary::kind_of(id) == k);
    kinds.insert(id);
  }
  CHECK(kinds.size() == kPerturbationCount);
}

TEST_CASE("vocabulary save, load, save is byte identical") {
  const Vocabulary v = Vocabulary::build(
      std::vector<std::string>{"The trophy doesn't fit into the brown suitcase.", "Über café"});
  const auto a = temp_path("vocab_a.json"), b = temp_path("vocab_b.json");
  v.save(a);
  const Vocabulary loaded = Vocabulary::load(a);
  CHECK(loaded == v);
  loaded.save(b);
  CHECK(read_file(a) == read_file(b));
}

TEST_CASE("vocabulary json must keep reserved ids") {
  nlohmann::json j = {{"[PAD]", 0}, {"x", 1}};
  CHECK_THROWS(Vocabulary::from_json(j));
}

TEST_CASE("corpus with 285 lines gives 285 groups") {
  std::stringstream ss;
  for (int i = 0; i < 285; ++i)
    ss << R"({"id": "s)" << i << R"(", "base": "sentence )" << i
       << R"(", "variants": {"TENSE": "sentences )" << i << R"("}})" << "\n";
  const auto load = parse_perturbation_corpus(ss);
  CHECK(load.groups.size() == 285);
  CHECK(load.groups[7].variants.at(PerturbationKind::Tense) == "sentences 7");
  CHECK(load.skipped_unknown_keys == 0);
}

TEST_CASE("corpus line with only the base sentence") {
  std::stringstream ss(R"({"id": "a", "base": "The cat sat."})");
  const auto load = parse_perturbation_corpus(ss);
  REQUIRE(load.groups.size() == 1);
  CHECK(load.groups[0].variants.empty());
  CHECK(*load.groups[0].sentence_for(PerturbationKind::Identical) == "The cat sat.");
  CHECK(load.groups[0].sentence_for(PerturbationKind::Tense) == nullptr);
}

TEST_CASE("duplicate perturbation key is an error with the line number") {
  std::stringstream ss(
      "{\"id\": \"a\", \"base\": \"x\"}\n"
      "{\"id\": \"b\", \"base\": \"y\", \"variants\": {\"TENSE\": \"p\", \"TENSE\": \"q\"}}\n");
  try {
    parse_perturbation_corpus(ss, "corpus.jsonl");
    FAIL("expected failure");
  } catch (const FormatError& e) {
    CHECK(e.line() == 2);
    CHECK(std::string(e.what()).find("TENSE") != std::string::npos);
    CHECK(std::string(e.what()).find("corpus.jsonl:2") != std::string::npos);
  }
}

TEST_CASE("unknown perturbation keys are skipped and counted") {
  std::stringstream ss(
      R"({"id": "a", "base": "x", "variants": {"SCRAMBLE": "p", "VOICE": "q", "NEGATION": "r"}})");
  const auto load = parse_perturbation_corpus(ss);
  CHECK(load.skipped_unknown_keys == 2);
  CHECK(load.groups[0].variants.size() == 1);
}

TEST_CASE("malformed corpus lines are rejected") {
  for (const char* bad : {R"({"id": "a"})", R"({"base": "x"})", "{not json",
                          R"({"id": "a", "base": "x", "variants": {"IDENTICAL": "x"}})",
                          R"({"id": "a", "base": "x", "variants": ["TENSE"]})"}) {
    std::stringstream ss(std::string("\n") + bad);
    try {
      parse_perturbation_corpus(ss);
      FAIL("expected failure for " << bad);
    } catch (const FormatError& e) {
      CHECK(e.line() == 2);
    }
  }
}

TEST_CASE("corpus serialization round trips") {
  PerturbedGroup g{"g1", "The cat sat.", {{PerturbationKind::Number, "The cats sat."},
                                          {PerturbationKind::Adverb, "The cat quietly sat."}}};
  std::stringstream ss(to_json_line(g) + "\n");
  CHECK(parse_perturbation_corpus(ss).groups.at(0) == g);
}

TEST_CASE("benchmark instance round trips unchanged") {
  SchemaInstance s{"The trophy does not fit in the suitcase because _ is too big.", "the trophy",
                   "the suitcase", 1, std::nullopt};
  std::stringstream ss(to_json_line(s) + "\n");
  const auto parsed = parse_benchmark(ss);
  REQUIRE(parsed.size() == 1);
  CHECK(parsed[0] == s);
  CHECK(to_json_line(parsed[0]) == to_json_line(s));
}

TEST_CASE("benchmark missing candidate names the field") {
  std::stringstream ss(R"({"sentence": "a _ b", "candidate1": "x", "label": 1})");
  try {
    parse_benchmark(ss);
    FAIL("expected failure");
  } catch (const FormatError& e) {
    CHECK(std::string(e.what()).find("candidate2") != std::string::npos);
  }
}

TEST_CASE("benchmark twin shares the candidates") {
  std::stringstream ss(
      R"({"sentence": "It did not fit because _ is too big.", "candidate1": "the trophy", )"
      R"("candidate2": "the case", "label": 1, "twin": "It did not fit because _ is too small."})");
  const auto parsed = parse_benchmark(ss);
  REQUIRE(parsed[0].twin.has_value());
  CHECK(parsed[0].candidate(1) == "the trophy");
  CHECK(parsed[0].candidate(2) == "the case");
  std::stringstream again(to_json_line(parsed[0]));
  CHECK(parse_benchmark(again)[0] == parsed[0]);
}

TEST_CASE("benchmark schema validation") {
  for (const char* bad : {
           R"({"sentence": "no slot here", "candidate1": "x", "candidate2": "y", "label": 1})",
           R"({"sentence": "_ and _", "candidate1": "x", "candidate2": "y", "label": 1})",
           R"({"sentence": "a _", "candidate1": "x", "candidate2": "X", "label": 1})",
           R"({"sentence": "a _", "candidate1": "", "candidate2": "y", "label": 1})",
           R"({"sentence": "a _", "candidate1": "x", "candidate2": "y", "label": 3})",
           R"({"sentence": "a _", "candidate1": "x", "candidate2": "y", "label": 1, "twin": "b"})",
       }) {
    std::stringstream ss(bad);
    CHECK_THROWS_AS(parse_benchmark(ss), FormatError);
  }
}

TEST_CASE("variants that tokenize like the base are reported") {
  const std::vector<PerturbedGroup> groups{
      {"a", "The cat sat.", {{PerturbationKind::Synonym, "the  CAT sat ."},
                             {PerturbationKind::Tense, "The cat sits."}}}};
  const auto vocab = Vocabulary::build(collect_texts(groups));
  const auto same = find_identical_variants(groups, Tokenizer(vocab));
  REQUIRE(same.size() == 1);
  CHECK(same[0].kind == PerturbationKind::Synonym);
}
