#pragma once

#include <string>
#include <vector>

#include "cref/eval/zero_shot.hpp"
#include "cref/refine/refine.hpp"

namespace cref {

struct NamedDataset {
  std::string name;
  std::vector<SchemaInstance> instances;
};

struct LossConfigRow {
  std::string label;
  LossWeights weights;
};

// The four loss configurations, each zeroing the omitted term of `full`:
// L_C+L_D, L_R+L_D, L_R+L_C, L_R+L_C+L_D.
std::vector<LossConfigRow> standard_loss_configs(const LossWeights& full);

inline constexpr const char* kBaselineLabel = "Baseline (init-LM)";

struct AblationRow {
  std::string label;
  std::optional<LossWeights> weights;  // empty for the baseline
  std::vector<EvalReport> reports;     // one per dataset
  std::vector<RefineStep> log;         // empty for the baseline
};

struct AblationTable {
  std::vector<std::string> datasets;
  std::vector<AblationRow> rows;

  // Rows = configurations, columns = datasets, accuracy in percent.
  std::string to_csv() const;
  nlohmann::ordered_json to_json() const;
};

// Evaluates the unrefined model, then refines a fresh copy of it per loss
// configuration (same config and seed for each) and evaluates every dataset.
AblationTable ablation_run(const EncoderModel& init, const std::vector<PerturbedGroup>& corpus,
                           const Tokenizer& tokenizer, const std::vector<NamedDataset>& datasets,
                           const std::vector<LossConfigRow>& configs, const RefinementConfig& refine_config,
                           const ScoreConfig& score = {});

}  // namespace cref
