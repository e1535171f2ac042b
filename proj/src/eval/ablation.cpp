#include "cref/eval/ablation.hpp"

#include <cstdio>
#include <sstream>
#include <stdexcept>

namespace cref {

std::vector<LossConfigRow> standard_loss_configs(const LossWeights& full) {
  return {
      {"L_C+L_D", {0.0, full.beta, full.gamma}},
      {"L_R+L_D", {full.alpha, 0.0, full.gamma}},
      {"L_R+L_C", {full.alpha, full.beta, 0.0}},
      {"L_R+L_C+L_D", full},
  };
}

namespace {

std::string csv_field(const std::string& s) {
  if (s.find_first_of(",\"\n") == std::string::npos) return s;
  std::string out = "\"";
  for (char c : s) out += c == '"' ? std::string("\"\"") : std::string(1, c);
  return out + "\"";
}

}  // namespace

std::string AblationTable::to_csv() const {
  std::ostringstream out;
  out << "config";
  for (const auto& d : datasets) out << ',' << csv_field(d);
  out << '\n';
  for (const auto& row : rows) {
    out << csv_field(row.label);
    for (const auto& r : row.reports) {
      char buf[32];
      std::snprintf(buf, sizeof buf, "%.2f", 100.0 * r.accuracy);
      out << ',' << buf;
    }
    out << '\n';
  }
  return out.str();
}

nlohmann::ordered_json AblationTable::to_json() const {
  nlohmann::ordered_json j;
  j["datasets"] = datasets;
  auto& rows_json = j["rows"] = nlohmann::ordered_json::array();
  for (const auto& row : rows) {
    nlohmann::ordered_json r;
    r["label"] = row.label;
    r["weights"] = row.weights ? row.weights->to_json() : nlohmann::ordered_json();
    r["accuracy"] = nlohmann::ordered_json::array();
    r["correct"] = nlohmann::ordered_json::array();
    r["count"] = nlohmann::ordered_json::array();
    for (const auto& rep : row.reports) {
      r["accuracy"].push_back(rep.accuracy);
      r["correct"].push_back(rep.correct);
      r["count"].push_back(rep.count);
    }
    if (!row.log.empty()) {
      r["first_total"] = row.log.front().total;
      r["final_total"] = row.log.back().total;
    }
    rows_json.push_back(std::move(r));
  }
  return j;
}

AblationTable ablation_run(const EncoderModel& init, const std::vector<PerturbedGroup>& corpus,
                           const Tokenizer& tokenizer, const std::vector<NamedDataset>& datasets,
                           const std::vector<LossConfigRow>& configs, const RefinementConfig& refine_config,
                           const ScoreConfig& score) {
  if (datasets.empty()) throw std::invalid_argument("ablation: no datasets");
  if (configs.empty()) throw std::invalid_argument("ablation: no loss configurations");
  for (const auto& c : configs) c.weights.validate();

  AblationTable table;
  for (const auto& d : datasets) table.datasets.push_back(d.name);

  auto evaluate_all = [&](const EncoderModel& model, AblationRow& row) {
    for (const auto& d : datasets) row.reports.push_back(evaluate(model, tokenizer, d.instances, d.name));
  };

  AblationRow baseline{kBaselineLabel, std::nullopt, {}, {}};
  evaluate_all(init, baseline);
  table.rows.push_back(std::move(baseline));

  for (const auto& c : configs) {
    EncoderModel model = init.clone();
    Discriminator disc = make_discriminator(model, refine_config);
    AblationRow row{c.label, c.weights, {}, {}};
    row.log = refine(model, disc, corpus, tokenizer, c.weights, refine_config, score).log;
    evaluate_all(model, row);
    table.rows.push_back(std::move(row));
  }
  return table;
}

}  // namespace cref
