#pragma once

// Resolved configuration of one CLI invocation: defaults, then the config
// file, then --section.key=value overrides, then dedicated flags.

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include <json.hpp>

#include "cref/encoder/encoder.hpp"
#include "cref/encoder/pretrain.hpp"
#include "cref/refine/refine.hpp"

namespace cref::cli {

struct DatasetPath {
  std::string name;
  std::string path;
};

struct RunConfig {
  std::uint64_t seed = 0;

  std::string corpus;
  std::vector<DatasetPath> datasets;
  std::string init_checkpoint;
  std::string checkpoint;
  std::string output = ".";

  EncoderConfig encoder;  // vocab_size 0 means "size of the built vocabulary"
  PretrainConfig pretrain;
  RefinementConfig refine;
  LossWeights loss;
  ScoreConfig score;

  std::vector<double> sweep_alpha;
  std::vector<double> sweep_beta;
  std::vector<double> sweep_gamma;

  RunConfig();

  nlohmann::ordered_json to_json() const;
  static RunConfig from_json(const nlohmann::json& j);
  // SHA-256 of the compact JSON rendering.
  std::string hash() const;
};

class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Applies `patch` onto `base`; every object key in the patch must already
// exist in base (arrays are replaced whole) and scalar kinds must agree.
void merge_checked(nlohmann::ordered_json& base, const nlohmann::json& patch, const std::string& where = "");

// "section.key" = "value"; value is parsed as JSON when possible, otherwise
// taken as a string.
void apply_override(nlohmann::ordered_json& config, const std::string& dotted_key, const std::string& value);

// Override root for relative output directories (CREF_OUTPUT_ROOT).
std::filesystem::path output_root();
std::filesystem::path resolve_output(const std::string& dir);

}  // namespace cref::cli
