#include "cref/eval/zero_shot.hpp"

#include <cmath>
#include <cstdio>
#include <limits>
#include <sstream>
#include <stdexcept>

#include "cref/text/vocabulary.hpp"

namespace cref {

CandidateScore score_candidate(const MaskedLanguageModel& model, const Tokenizer& tokenizer,
                               const std::string& sentence, const SchemaInstance& instance, int which) {
  if (which != 1 && which != 2) throw std::invalid_argument("candidate index must be 1 or 2");
  const auto cand_words = split_words(instance.candidate(which));
  if (cand_words.empty()) throw std::invalid_argument("candidate " + std::to_string(which) + " is empty");
  const Vocabulary& vocab = tokenizer.vocab();

  std::vector<int> body;
  std::vector<std::size_t> positions;
  std::size_t slots = 0;
  for (const auto& w : split_words(sentence)) {
    if (w == kSlotMarker) {
      ++slots;
      for (std::size_t j = 0; j < cand_words.size(); ++j) {
        positions.push_back(body.size() + 1);
        body.push_back(Vocabulary::kMask);
      }
    } else {
      body.push_back(vocab.id(w));
    }
  }
  if (slots != 1)
    throw std::invalid_argument("sentence must contain exactly one '_' slot: " + sentence);
  std::vector<int> targets;
  for (const auto& w : cand_words) targets.push_back(vocab.id(w));

  CandidateScore result;
  result.candidate = which;
  result.tokens = cand_words.size();
  TokenSequence seq;
  try {
    seq = tokenizer.wrap(body);
  } catch (const SequenceOverflow& e) {
    result.log_prob = -std::numeric_limits<double>::infinity();
    result.warning = "candidate " + std::to_string(which) + " ('" + instance.candidate(which) +
                     "') overflows the sequence by " + std::to_string(e.overflow()) + " tokens";
    return result;
  }

  NoGradGuard no_grad;
  const Tensor logits = model.mlm_logits_at(seq, positions);
  const std::size_t V = logits.cols();
  double total = 0;
  for (std::size_t j = 0; j < positions.size(); ++j) {
    const real* row = logits.values().data() + j * V;
    double mx = row[0];
    for (std::size_t v = 1; v < V; ++v) mx = std::max(mx, static_cast<double>(row[v]));
    double s = 0;
    for (std::size_t v = 0; v < V; ++v) s += std::exp(static_cast<double>(row[v]) - mx);
    total += (static_cast<double>(row[targets[j]]) - mx) - std::log(s);
  }
  result.log_prob = total / static_cast<double>(positions.size());
  return result;
}

CandidateScore score_candidate(const MaskedLanguageModel& model, const Tokenizer& tokenizer,
                               const SchemaInstance& instance, int which) {
  return score_candidate(model, tokenizer, instance.sentence, instance, which);
}

int resolve(const CandidateScore& first, const CandidateScore& second) {
  return second.log_prob > first.log_prob ? 2 : 1;
}

int resolve(const MaskedLanguageModel& model, const Tokenizer& tokenizer, const SchemaInstance& instance) {
  return resolve(score_candidate(model, tokenizer, instance, 1),
                 score_candidate(model, tokenizer, instance, 2));
}

std::string format_real(double v) {
  if (std::isinf(v)) return v < 0 ? "-inf" : "inf";
  if (std::isnan(v)) return "nan";
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

namespace {

nlohmann::ordered_json score_json(double v) {
  if (std::isfinite(v)) return v;
  return format_real(v);
}

}  // namespace

nlohmann::ordered_json EvalReport::to_json() const {
  nlohmann::ordered_json j;
  j["dataset"] = dataset;
  j["count"] = count;
  j["correct"] = correct;
  j["accuracy"] = accuracy;
  j["warnings"] = warnings;
  auto& rows = j["decisions"] = nlohmann::ordered_json::array();
  for (const auto& d : decisions)
    rows.push_back({{"instance", d.instance},
                    {"twin", d.twin},
                    {"gold", d.gold},
                    {"chosen", d.chosen},
                    {"score1", score_json(d.score1)},
                    {"score2", score_json(d.score2)},
                    {"correct", d.correct()}});
  return j;
}

std::string EvalReport::to_csv() const {
  std::ostringstream out;
  out << "instance,twin,gold,chosen,score1,score2,correct\n";
  for (const auto& d : decisions)
    out << d.instance << ',' << (d.twin ? 1 : 0) << ',' << d.gold << ',' << d.chosen << ','
        << format_real(d.score1) << ',' << format_real(d.score2) << ',' << (d.correct() ? 1 : 0) << '\n';
  return out.str();
}

EvalReport evaluate(const MaskedLanguageModel& model, const Tokenizer& tokenizer,
                    const std::vector<SchemaInstance>& dataset, const std::string& name) {
  if (dataset.empty()) throw std::invalid_argument("evaluate: dataset '" + name + "' is empty");
  struct Item {
    std::size_t instance;
    bool twin;
  };
  std::vector<Item> items;
  for (std::size_t i = 0; i < dataset.size(); ++i) {
    items.push_back({i, false});
    if (dataset[i].twin) items.push_back({i, true});
  }

  std::vector<Decision> decisions(items.size());
  std::vector<std::string> item_warnings(items.size());
  std::vector<std::string> errors(items.size());
  const long n = static_cast<long>(items.size());
#pragma omp parallel for schedule(dynamic, 4)
  for (long k = 0; k < n; ++k) {
    const Item& it = items[k];
    const SchemaInstance& inst = dataset[it.instance];
    try {
      const std::string& sentence = it.twin ? *inst.twin : inst.sentence;
      const CandidateScore s1 = score_candidate(model, tokenizer, sentence, inst, 1);
      const CandidateScore s2 = score_candidate(model, tokenizer, sentence, inst, 2);
      Decision& d = decisions[k];
      d.instance = it.instance;
      d.twin = it.twin;
      d.gold = it.twin ? 3 - inst.label : inst.label;
      d.chosen = resolve(s1, s2);
      d.score1 = s1.log_prob;
      d.score2 = s2.log_prob;
      for (const auto* s : {&s1, &s2})
        if (s->warning)
          item_warnings[k] += (item_warnings[k].empty() ? "" : "; ") + std::string(name) + " #" +
                              std::to_string(it.instance) + (it.twin ? " twin" : "") + ": " + *s->warning;
    } catch (const std::exception& e) {
      errors[k] = e.what();
    }
  }
  for (std::size_t k = 0; k < errors.size(); ++k)
    if (!errors[k].empty())
      throw std::runtime_error(name + " #" + std::to_string(items[k].instance) + ": " + errors[k]);

  EvalReport report;
  report.dataset = name;
  report.count = decisions.size();
  for (const auto& d : decisions) report.correct += d.correct() ? 1 : 0;
  report.accuracy = static_cast<double>(report.correct) / static_cast<double>(report.count);
  report.decisions = std::move(decisions);
  for (auto& w : item_warnings)
    if (!w.empty()) report.warnings.push_back(std::move(w));
  return report;
}

}  // namespace cref
