#include "run_config.hpp"

#include <cstdlib>

#include "cref/core/hash.hpp"

namespace cref::cli {

RunConfig::RunConfig() : refine(bert_row_config()), loss(bert_row_weights()) {
  encoder.vocab_size = 0;
  sweep_alpha = {loss.alpha};
  sweep_beta = {loss.beta};
  sweep_gamma = {loss.gamma};
}

nlohmann::ordered_json RunConfig::to_json() const {
  nlohmann::ordered_json j;
  j["seed"] = seed;
  auto& paths = j["paths"];
  paths["corpus"] = corpus;
  paths["datasets"] = nlohmann::ordered_json::array();
  for (const auto& d : datasets) paths["datasets"].push_back({{"name", d.name}, {"path", d.path}});
  paths["init_checkpoint"] = init_checkpoint;
  paths["checkpoint"] = checkpoint;
  paths["output"] = output;
  j["encoder"] = encoder.to_json();
  j["pretrain"] = pretrain.to_json();
  j["pretrain"].erase("seed");
  j["refine"] = refine.to_json();
  j["refine"].erase("seed");
  j["loss"] = loss.to_json();
  j["score"] = score.to_json();
  j["sweep"] = {{"alpha", sweep_alpha}, {"beta", sweep_beta}, {"gamma", sweep_gamma}};
  return j;
}

RunConfig RunConfig::from_json(const nlohmann::json& j) {
  RunConfig c;
  c.seed = j.at("seed").get<std::uint64_t>();
  const auto& paths = j.at("paths");
  c.corpus = paths.at("corpus").get<std::string>();
  for (const auto& d : paths.at("datasets")) {
    if (!d.is_object() || !d.contains("path"))
      throw ConfigError("paths.datasets entries need a \"path\" (and optionally a \"name\")");
    const std::string path = d.at("path").get<std::string>();
    const std::string name = d.contains("name") ? d.at("name").get<std::string>()
                                                : std::filesystem::path(path).stem().string();
    c.datasets.push_back({name, path});
  }
  c.init_checkpoint = paths.at("init_checkpoint").get<std::string>();
  c.checkpoint = paths.at("checkpoint").get<std::string>();
  c.output = paths.at("output").get<std::string>();
  c.encoder = EncoderConfig::from_json(j.at("encoder"));
  c.pretrain = PretrainConfig::from_json(j.at("pretrain"));
  c.refine = RefinementConfig::from_json(j.at("refine"));
  c.pretrain.seed = c.seed;
  c.refine.seed = c.seed;
  c.loss = LossWeights::from_json(j.at("loss"));
  c.score = ScoreConfig::from_json(j.at("score"));
  const auto& sweep = j.at("sweep");
  c.sweep_alpha = sweep.at("alpha").get<std::vector<double>>();
  c.sweep_beta = sweep.at("beta").get<std::vector<double>>();
  c.sweep_gamma = sweep.at("gamma").get<std::vector<double>>();
  return c;
}

std::string RunConfig::hash() const { return sha256_hex(to_json().dump()); }

namespace {

bool same_kind(const nlohmann::json& a, const nlohmann::json& b) {
  if (a.is_number() && b.is_number()) {
    // An integer slot cannot take a fraction.
    return !(a.is_number_integer() && b.is_number_float());
  }
  return a.type() == b.type();
}

}  // namespace

void merge_checked(nlohmann::ordered_json& base, const nlohmann::json& patch, const std::string& where) {
  if (!patch.is_object()) throw ConfigError("config" + (where.empty() ? "" : " " + where) + " must be an object");
  for (const auto& [key, value] : patch.items()) {
    const std::string path = where.empty() ? key : where + "." + key;
    if (!base.contains(key)) throw ConfigError("unknown config key '" + path + "'");
    auto& slot = base[key];
    if (slot.is_object()) {
      merge_checked(slot, value, path);
    } else if (!same_kind(slot, value)) {
      throw ConfigError("config key '" + path + "' expects " + std::string(slot.type_name()) + ", got " +
                        std::string(value.type_name()));
    } else if (slot.is_number_float()) {
      slot = value.get<double>();
    } else {
      slot = value;
    }
  }
}

void apply_override(nlohmann::ordered_json& config, const std::string& dotted_key, const std::string& value) {
  // String slots take the raw text, so "--paths.output=123" stays a path.
  const nlohmann::ordered_json* slot = &config;
  for (std::size_t start = 0; slot;) {
    const std::size_t dot = dotted_key.find('.', start);
    const std::string part = dotted_key.substr(start, dot == std::string::npos ? std::string::npos : dot - start);
    slot = slot->is_object() && slot->contains(part) ? &(*slot)[part] : nullptr;
    if (dot == std::string::npos) break;
    start = dot + 1;
  }
  nlohmann::json parsed = nlohmann::json::parse(value, nullptr, false);
  if (parsed.is_discarded() || (slot && slot->is_string())) parsed = value;
  nlohmann::json patch = parsed;
  std::size_t end = dotted_key.size();
  while (true) {
    const std::size_t dot = dotted_key.rfind('.', end - 1);
    const std::size_t begin = dot == std::string::npos ? 0 : dot + 1;
    const std::string part = dotted_key.substr(begin, end - begin);
    if (part.empty()) throw ConfigError("malformed override key '" + dotted_key + "'");
    patch = nlohmann::json{{part, std::move(patch)}};
    if (dot == std::string::npos) break;
    end = dot;
  }
  merge_checked(config, patch);
}

std::filesystem::path output_root() {
  const char* root = std::getenv("CREF_OUTPUT_ROOT");
  return root && *root ? std::filesystem::path(root) : std::filesystem::path(".");
}

std::filesystem::path resolve_output(const std::string& dir) {
  const std::filesystem::path p(dir);
  return p.is_absolute() ? p : output_root() / p;
}

}  // namespace cref::cli
