#include "cref/synth/synthetic.hpp"

#include <array>
#include <map>
#include <optional>
#include <set>
#include <stdexcept>

#include "cref/core/rng.hpp"
#include "cref/text/tokenizer.hpp"

namespace cref {
namespace {

struct Noun {
  const char* one;
  const char* many;
  const char* synonym;
};

struct Person {
  const char* one;
  const char* many;
  const char* synonym;
  const char* pronoun;
  int counterpart;  // index of the other-gender entry
};

struct Verb {
  const char* base;
  const char* third;
  const char* past;
  const char* participle;
};

constexpr std::array<Noun, 30> kNouns{{
    {"trophy", "trophies", "medal"},   {"suitcase", "suitcases", "valise"},
    {"box", "boxes", "crate"},         {"ball", "balls", "sphere"},
    {"table", "tables", "desk"},       {"book", "books", "novel"},
    {"cup", "cups", "mug"},            {"rock", "rocks", "stone"},
    {"car", "cars", "automobile"},     {"bag", "bags", "sack"},
    {"chair", "chairs", "seat"},       {"bottle", "bottles", "flask"},
    {"door", "doors", "gate"},         {"boat", "boats", "ship"},
    {"lamp", "lamps", "lantern"},      {"rope", "ropes", "cord"},
    {"stick", "sticks", "rod"},        {"window", "windows", "pane"},
    {"hammer", "hammers", "mallet"},   {"statue", "statues", "sculpture"},
    {"pillow", "pillows", "cushion"},  {"shelf", "shelves", "ledge"},
    {"plate", "plates", "dish"},       {"jar", "jars", "pot"},
    {"bucket", "buckets", "pail"},     {"bench", "benches", "pew"},
    {"carpet", "carpets", "rug"},      {"pebble", "pebbles", "gravel"},
    {"basket", "baskets", "hamper"},   {"blanket", "blankets", "quilt"},
}};

constexpr std::array<Person, 16> kPeople{{
    {"man", "men", "gentleman", "he", 1},        {"woman", "women", "lady", "she", 0},
    {"boy", "boys", "lad", "he", 3},             {"girl", "girls", "lass", "she", 2},
    {"king", "kings", "monarch", "he", 5},       {"queen", "queens", "empress", "she", 4},
    {"father", "fathers", "dad", "he", 7},       {"mother", "mothers", "mom", "she", 6},
    {"brother", "brothers", "sibling", "he", 9}, {"sister", "sisters", "sis", "she", 8},
    {"uncle", "uncles", "relative", "he", 11},   {"aunt", "aunts", "auntie", "she", 10},
    {"waiter", "waiters", "server", "he", 13},   {"waitress", "waitresses", "hostess", "she", 12},
    {"actor", "actors", "performer", "he", 15},  {"actress", "actresses", "starlet", "she", 14},
}};

constexpr std::array<Verb, 20> kVerbs{{
    {"lift", "lifts", "lifted", "lifted"},     {"push", "pushes", "pushed", "pushed"},
    {"carry", "carries", "carried", "carried"}, {"move", "moves", "moved", "moved"},
    {"drop", "drops", "dropped", "dropped"},   {"paint", "paints", "painted", "painted"},
    {"clean", "cleans", "cleaned", "cleaned"}, {"kick", "kicks", "kicked", "kicked"},
    {"pull", "pulls", "pulled", "pulled"},     {"break", "breaks", "broke", "broken"},
    {"hit", "hits", "hit", "hit"},             {"throw", "throws", "threw", "thrown"},
    {"hold", "holds", "held", "held"},         {"wash", "washes", "washed", "washed"},
    {"fix", "fixes", "fixed", "fixed"},        {"cover", "covers", "covered", "covered"},
    {"touch", "touches", "touched", "touched"}, {"open", "opens", "opened", "opened"},
    {"hide", "hides", "hid", "hidden"},        {"choose", "chooses", "chose", "chosen"},
}};

constexpr std::array<const char*, 24> kAdjectives{
    "heavy", "light", "large", "tiny",   "old",   "new",   "wet",    "dry",
    "strong", "soft", "tall",  "short",  "clean", "dirty", "hot",    "cold",
    "bright", "dark", "tired", "happy",  "busy",  "calm",  "famous", "quiet",
};

constexpr std::array<const char*, 10> kAdverbs{
    "quickly", "slowly", "gently", "carefully", "suddenly",
    "quietly", "firmly", "easily", "barely",    "finally",
};

// One sentence of the corpus frame:
//   the S [which|who was A2] [ADV] V the O because P was A .
// or its passive counterpart.
struct Clause {
  bool person = false;
  std::size_t subject = 0;
  std::size_t object = 0;
  std::size_t verb = 0;
  std::size_t adjective = 0;
  std::size_t rel_adjective = 0;
  std::size_t adverb = 0;
  bool present = false;
  bool plural = false;
  bool passive = false;
  bool relative = false;
  bool with_adverb = false;
  bool synonyms = false;
};

std::string render(const Clause& s) {
  std::string subj, pron;
  if (s.person) {
    const Person& p = kPeople[s.subject];
    subj = s.synonyms ? p.synonym : (s.plural ? p.many : p.one);
    pron = s.plural ? "they" : p.pronoun;
  } else {
    const Noun& n = kNouns[s.subject];
    subj = s.synonyms ? n.synonym : (s.plural ? n.many : n.one);
    pron = s.plural ? "they" : "it";
  }
  if (s.synonyms && s.plural) throw std::logic_error("synonym and number are separate variants");
  const std::string obj = s.synonyms ? kNouns[s.object].synonym : kNouns[s.object].one;
  const Verb& v = kVerbs[s.verb];
  const std::string cop_subj = s.present ? (s.plural ? "are" : "is") : (s.plural ? "were" : "was");
  const std::string tail =
      " because " + pron + " " + cop_subj + " " + kAdjectives[s.adjective] + " .";
  std::string head = "the " + subj;
  if (s.relative)
    head += std::string(s.person ? " who " : " which ") + cop_subj + " " + kAdjectives[s.rel_adjective];
  if (s.passive) {
    const std::string cop_obj = s.present ? "is" : "was";
    return "the " + obj + " " + cop_obj + " " + v.participle + " by " + head.substr(0) + tail;
  }
  if (s.with_adverb) head += std::string(" ") + kAdverbs[s.adverb];
  const std::string verb = s.present ? (s.plural ? v.base : v.third) : v.past;
  return head + " " + verb + " the " + obj + tail;
}

// Registry of "sentence with one word masked" -> word, used to keep every
// masked position of the corpus uniquely recoverable.
class ContextIndex {
 public:
  bool compatible(const std::vector<std::string>& sentences) const {
    std::map<std::string, std::string> local;
    for (const auto& s : sentences)
      for (const auto& [ctx, word] : contexts(s)) {
        auto it = index_.find(ctx);
        if (it != index_.end() && it->second != word) return false;
        auto [lit, fresh] = local.emplace(ctx, word);
        if (!fresh && lit->second != word) return false;
      }
    return true;
  }

  void add(const std::vector<std::string>& sentences) {
    for (const auto& s : sentences)
      for (auto& [ctx, word] : contexts(s)) index_.emplace(std::move(ctx), std::move(word));
  }

 private:
  static std::vector<std::pair<std::string, std::string>> contexts(const std::string& sentence) {
    const auto words = split_words(sentence);
    std::vector<std::pair<std::string, std::string>> out;
    for (std::size_t i = 0; i < words.size(); ++i) {
      std::string ctx;
      for (std::size_t j = 0; j < words.size(); ++j) {
        ctx += j == i ? std::string("\x01") : words[j];
        ctx += ' ';
      }
      out.emplace_back(std::move(ctx), words[i]);
    }
    return out;
  }

  std::map<std::string, std::string> index_;
};

}  // namespace

std::vector<PerturbedGroup> synthesize_corpus(const SynthCorpusConfig& config) {
  Rng rng(config.seed);
  ContextIndex index;
  std::set<std::string> bases;
  std::vector<PerturbedGroup> groups;
  for (std::size_t attempt = 0; attempt < config.max_attempts && groups.size() < config.groups; ++attempt) {
    Clause base;
    base.person = rng.bernoulli(0.4);
    base.subject = rng.index(base.person ? kPeople.size() : kNouns.size());
    do base.object = rng.index(kNouns.size());
    while (!base.person && base.object == base.subject);
    base.verb = rng.index(kVerbs.size());
    base.adjective = rng.index(kAdjectives.size());
    do base.rel_adjective = rng.index(kAdjectives.size());
    while (base.rel_adjective == base.adjective);
    base.adverb = rng.index(kAdverbs.size());

    PerturbedGroup g;
    g.base = render(base);
    if (bases.contains(g.base)) continue;
    auto variant = [&](PerturbationKind kind, auto&& edit) {
      Clause s = base;
      edit(s);
      g.variants.emplace(kind, render(s));
    };
    variant(PerturbationKind::Tense, [](Clause& s) { s.present = true; });
    variant(PerturbationKind::Number, [](Clause& s) { s.plural = true; });
    if (base.person)
      variant(PerturbationKind::Gender,
              [](Clause& s) { s.subject = static_cast<std::size_t>(kPeople[s.subject].counterpart); });
    variant(PerturbationKind::Voice, [](Clause& s) { s.passive = true; });
    variant(PerturbationKind::RelClause, [](Clause& s) { s.relative = true; });
    variant(PerturbationKind::Adverb, [](Clause& s) { s.with_adverb = true; });
    variant(PerturbationKind::Synonym, [](Clause& s) { s.synonyms = true; });
    // Thin some groups out so partial variant maps occur.
    for (auto kind : {PerturbationKind::Voice, PerturbationKind::RelClause, PerturbationKind::Adverb})
      if (g.variants.size() > 4 && rng.bernoulli(0.15)) g.variants.erase(kind);

    std::vector<std::string> sentences{g.base};
    for (const auto& [kind, text] : g.variants) sentences.push_back(text);
    if (!index.compatible(sentences)) continue;
    index.add(sentences);
    bases.insert(g.base);
    g.id = "synth-" + std::to_string(groups.size());
    groups.push_back(std::move(g));
  }
  if (groups.size() < config.groups)
    throw std::runtime_error("synthetic corpus: only " + std::to_string(groups.size()) + " of " +
                             std::to_string(config.groups) + " groups could be drawn");
  return groups;
}

std::string synth_benchmark_name(SynthBenchmark kind) {
  return kind == SynthBenchmark::Physical ? "synthetic-physical" : "synthetic-social";
}

std::vector<SchemaInstance> synthesize_benchmark(const SynthBenchmarkConfig& config) {
  struct Frame {
    const char* before;   // text before the first candidate's noun
    const char* middle;   // between the two candidates
    const char* after;    // after the slot, before the trigger
    const char* trigger1;  // resolves to candidate 1
    const char* trigger2;  // resolves to candidate 2
  };
  static const std::array<Frame, 3> kPhysical{{
      {"the ", " did not fit into the ", " because _ was too ", "big", "small"},
      {"the ", " could not hold the ", " because _ was too ", "weak", "heavy"},
      {"the ", " broke the ", " because _ was too ", "hard", "fragile"},
  }};
  static const std::array<Frame, 3> kSocial{{
      {"the ", " paid the ", " because _ was ", "rich", "poor"},
      {"the ", " thanked the ", " because _ was ", "grateful", "helpful"},
      {"the ", " scolded the ", " because _ was ", "angry", "rude"},
  }};
  if (config.lines == 0) throw std::invalid_argument("synthetic benchmark: lines must be positive");
  const bool physical = config.kind == SynthBenchmark::Physical;
  const auto& frames = physical ? kPhysical : kSocial;
  Rng rng(config.seed);
  std::vector<SchemaInstance> out;
  for (std::size_t i = 0; i < config.lines; ++i) {
    const Frame& f = frames[rng.index(frames.size())];
    std::string a, b;
    if (physical) {
      const std::size_t x = rng.index(kNouns.size());
      std::size_t y;
      do y = rng.index(kNouns.size());
      while (y == x);
      a = kNouns[x].one;
      b = kNouns[y].one;
    } else {
      const std::size_t x = rng.index(kPeople.size());
      std::size_t y;
      do y = rng.index(kPeople.size());
      while (y == x);
      a = kPeople[x].one;
      b = kPeople[y].one;
    }
    const std::string stem = std::string(f.before) + a + f.middle + b + f.after;
    const bool first = i % 2 == 0;
    SchemaInstance s;
    s.sentence = stem + (first ? f.trigger1 : f.trigger2) + " .";
    s.twin = stem + (first ? f.trigger2 : f.trigger1) + " .";
    s.candidate1 = "the " + a;
    s.candidate2 = "the " + b;
    s.label = first ? 1 : 2;
    out.push_back(std::move(s));
  }
  return out;
}

}  // namespace cref
