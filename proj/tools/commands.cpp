#include "commands.hpp"

#include <CLI11.hpp>

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <memory>
#include <numeric>
#include <optional>
#include <sstream>

#include "cref/core/hash.hpp"
#include "cref/eval/ablation.hpp"
#include "cref/synth/synthetic.hpp"
#include "cref/text/vocabulary.hpp"
#include "run_config.hpp"

namespace cref::cli {
namespace {

using ojson = nlohmann::ordered_json;

inline constexpr const char* kRefinedLabel = "Ours (Zero-shot)";

struct CommonOptions {
  std::string config_path;
  std::optional<std::uint64_t> seed;
  std::optional<std::string> target_mode;
};

RunConfig resolve(const CommonOptions& opts, const std::vector<std::string>& extras) {
  ojson j = RunConfig().to_json();
  if (!opts.config_path.empty()) {
    std::ifstream in(opts.config_path);
    if (!in) throw ConfigError("cannot open config " + opts.config_path);
    const nlohmann::json file = nlohmann::json::parse(in, nullptr, false);
    if (file.is_discarded()) throw ConfigError(opts.config_path + ": not valid JSON");
    merge_checked(j, file);
  }
  for (std::size_t i = 0; i < extras.size(); ++i) {
    const std::string& arg = extras[i];
    if (arg.rfind("--", 0) != 0) throw ConfigError("unexpected argument '" + arg + "'");
    const std::string body = arg.substr(2);
    const std::size_t eq = body.find('=');
    if (eq != std::string::npos) {
      apply_override(j, body.substr(0, eq), body.substr(eq + 1));
    } else {
      if (i + 1 >= extras.size()) throw ConfigError("override '" + arg + "' has no value");
      apply_override(j, body, extras[++i]);
    }
  }
  if (opts.seed) j["seed"] = *opts.seed;
  if (opts.target_mode) j["refine"]["target_mode"] = target_mode_name(parse_target_mode(*opts.target_mode));
  return RunConfig::from_json(j);
}

void write_text(const std::filesystem::path& path, const std::string& text) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << text;
  if (!out) throw std::runtime_error("short write to " + path.string());
}

// Leading comment lines carrying the resolved config.
std::string provenance(const RunConfig& config) {
  return "# config_hash: " + config.hash() + "\n# run_config: " + config.to_json().dump() + "\n";
}

ojson artifact_header(const std::string& artifact, const RunConfig& config) {
  ojson j;
  j["artifact"] = artifact;
  j["config_hash"] = config.hash();
  j["run_config"] = config.to_json();
  return j;
}

std::vector<PerturbedGroup> load_corpus(const RunConfig& config) {
  if (config.corpus.empty()) throw ConfigError("paths.corpus is not set");
  return load_perturbation_corpus(config.corpus).groups;
}

std::vector<NamedDataset> load_datasets(const RunConfig& config, bool required) {
  if (required && config.datasets.empty()) throw ConfigError("paths.datasets is empty");
  std::vector<NamedDataset> out;
  for (const auto& d : config.datasets) out.push_back({d.name, load_benchmark(d.path)});
  return out;
}

struct LoadedModel {
  EncoderModel model;
  Tokenizer tokenizer;
  nlohmann::json metadata;
  std::string sha256;
};

LoadedModel load_model(const std::string& path, const char* what) {
  if (path.empty()) throw ConfigError(std::string(what) + " is not set");
  nlohmann::json meta;
  EncoderModel model = EncoderModel::load(path, &meta);
  if (!meta.contains("vocabulary")) throw std::runtime_error(path + ": checkpoint carries no vocabulary");
  Tokenizer tok(Vocabulary::from_json(meta["vocabulary"]), model.config().max_len);
  return {std::move(model), std::move(tok), std::move(meta), file_sha256(path)};
}

std::string refine_log_csv(const RunConfig& config, const std::vector<RefineStep>& log) {
  std::string csv = provenance(config) + "step,lr,L_R,L_C,L_D,total\n";
  for (const auto& s : log)
    csv += std::to_string(s.step) + ',' + format_real(s.learning_rate) + ',' + format_real(s.reconstruction) +
           ',' + format_real(s.contrastive) + ',' + format_real(s.diversity) + ',' + format_real(s.total) + '\n';
  return csv;
}

ojson refine_summary(const RefineResult& result, std::size_t epochs) {
  ojson j;
  j["steps"] = result.log.size();
  j["skipped_groups"] = result.skipped_groups;
  j["skipped_variants"] = result.skipped_variants;
  if (!result.log.empty()) {
    const double first = result.epoch_mean_total(0);
    const double last = result.epoch_mean_total(epochs - 1);
    j["first_epoch_mean_total"] = first;
    j["last_epoch_mean_total"] = last;
    j["relative_reduction"] = first != 0 ? (first - last) / std::abs(first) : 0.0;
  }
  return j;
}

ojson probe_json(const ProbeReport& p) {
  return {{"kind_accuracy", p.kind_accuracy},
          {"chance", p.chance},
          {"min_same_kind_distance", p.min_same_kind_distance},
          {"train_examples", p.train_examples},
          {"test_examples", p.test_examples}};
}

// ---- commands -------------------------------------------------------------

int cmd_synth(const std::string& dir, std::size_t groups, std::size_t lines, std::uint64_t seed, std::ostream& out) {
  const auto root = resolve_output(dir);
  const auto corpus = synthesize_corpus({groups, seed});
  std::string text;
  for (const auto& g : corpus) text += to_json_line(g) + "\n";
  write_text(root / "corpus.jsonl", text);

  RunConfig config;
  config.corpus = (root / "corpus.jsonl").string();
  ojson files;
  files["corpus"] = config.corpus;
  for (auto kind : {SynthBenchmark::Physical, SynthBenchmark::Social}) {
    const auto bench = synthesize_benchmark({kind, lines, seed + 1});
    std::string b;
    for (const auto& s : bench) b += to_json_line(s) + "\n";
    const std::string name = synth_benchmark_name(kind);
    const auto path = root / (name + ".jsonl");
    write_text(path, b);
    config.datasets.push_back({name, path.string()});
    files[name] = path.string();
  }
  config.output = (root / "run").string();
  write_text(root / "run.json", config.to_json().dump(2) + "\n");
  out << ojson{{"command", "synth"}, {"groups", corpus.size()}, {"lines", lines}, {"files", files},
               {"config", (root / "run.json").string()}}
             .dump()
      << "\n";
  return 0;
}

int cmd_pretrain(const RunConfig& config, std::ostream& out) {
  const auto groups = load_corpus(config);
  const auto datasets = load_datasets(config, false);
  std::vector<std::string> texts = collect_texts(groups);
  std::vector<std::string> vocab_texts = texts;
  for (const auto& d : datasets) {
    auto more = collect_texts(d.instances);
    vocab_texts.insert(vocab_texts.end(), more.begin(), more.end());
  }
  Vocabulary vocab = Vocabulary::build(vocab_texts);
  EncoderConfig ec = config.encoder;
  if (ec.vocab_size == 0) ec.vocab_size = vocab.size();
  if (ec.vocab_size != vocab.size())
    throw ConfigError("encoder.vocab_size " + std::to_string(ec.vocab_size) + " differs from the built vocabulary (" +
                      std::to_string(vocab.size()) + ")");
  ec.validate();
  const Tokenizer tok(vocab, ec.max_len);
  std::vector<TokenSequence> seqs;
  for (const auto& t : texts) seqs.push_back(tok.encode(t));

  EncoderModel model(ec, config.seed);
  const auto log = pretrain_mlm(model, seqs, config.pretrain);
  const double accuracy = masked_token_accuracy(model, seqs);

  const auto dir = resolve_output(config.output);
  std::string csv = provenance(config) + "step,lr,loss\n";
  for (const auto& s : log)
    csv += std::to_string(s.step) + ',' + format_real(s.learning_rate) + ',' + format_real(s.loss) + '\n';
  write_text(dir / "pretrain_log.csv", csv);
  vocab.save(dir / "vocab.json");
  ojson meta = artifact_header("pretrain", config);
  meta["vocabulary"] = vocab.to_json();
  meta["masked_token_accuracy"] = accuracy;
  model.save(dir / "init.ckpt", meta);

  ojson summary = artifact_header("pretrain_summary", config);
  summary["checkpoint"] = (dir / "init.ckpt").string();
  summary["checkpoint_sha256"] = file_sha256(dir / "init.ckpt");
  summary["vocab_size"] = vocab.size();
  summary["sentences"] = seqs.size();
  summary["steps"] = log.size();
  summary["final_loss"] = log.empty() ? 0.0 : log.back().loss;
  summary["masked_token_accuracy"] = accuracy;
  write_text(dir / "pretrain_summary.json", summary.dump(2) + "\n");
  summary.erase("run_config");
  out << summary.dump() << "\n";
  return 0;
}

int cmd_refine(const RunConfig& config, std::ostream& out) {
  config.loss.validate();
  config.refine.validate();
  LoadedModel init = load_model(config.init_checkpoint, "paths.init_checkpoint");
  const auto groups = load_corpus(config);
  EncoderModel& model = init.model;
  Discriminator disc = make_discriminator(model, config.refine);
  const RefineResult result = refine(model, disc, groups, init.tokenizer, config.loss, config.refine, config.score);
  const ProbeReport probes = no_collapse_probes(model, groups, init.tokenizer, config.score, config.seed);

  const auto dir = resolve_output(config.output);
  write_text(dir / "refine_log.csv", refine_log_csv(config, result.log));
  ojson meta = artifact_header("refine", config);
  meta["vocabulary"] = init.metadata["vocabulary"];
  meta["init_checkpoint_sha256"] = init.sha256;
  model.save(dir / "refined.ckpt", meta);

  ojson summary = artifact_header("refine_summary", config);
  summary["checkpoint"] = (dir / "refined.ckpt").string();
  summary["checkpoint_sha256"] = file_sha256(dir / "refined.ckpt");
  summary["init_checkpoint_sha256"] = init.sha256;
  summary["loss"] = refine_summary(result, config.refine.epochs);
  summary["probes"] = probe_json(probes);
  write_text(dir / "refine_summary.json", summary.dump(2) + "\n");
  summary.erase("run_config");
  out << summary.dump() << "\n";
  return 0;
}

void emit(const std::string& target, const std::string& text, std::ostream& out) {
  if (target == "-")
    out << text;
  else
    write_text(target, text);
}

int cmd_evaluate(const RunConfig& config, std::string baseline, std::string refined, const std::string& json_out,
                 const std::string& csv_out, std::ostream& out) {
  if (baseline.empty()) baseline = config.init_checkpoint;
  if (refined.empty()) refined = config.checkpoint;
  if (baseline.empty() && refined.empty())
    throw ConfigError("evaluate needs --baseline and/or --refined (or paths.init_checkpoint / paths.checkpoint)");
  const auto datasets = load_datasets(config, true);

  AblationTable table;
  for (const auto& d : datasets) table.datasets.push_back(d.name);
  ojson models = ojson::array();
  ojson warnings = ojson::array();
  for (const auto& [label, path] : {std::pair<std::string, std::string>{kBaselineLabel, baseline},
                                    std::pair<std::string, std::string>{kRefinedLabel, refined}}) {
    if (path.empty()) continue;
    LoadedModel m = load_model(path, "checkpoint");
    AblationRow row{label, std::nullopt, {}, {}};
    for (const auto& d : datasets) {
      row.reports.push_back(evaluate(m.model, m.tokenizer, d.instances, d.name));
      for (const auto& w : row.reports.back().warnings) warnings.push_back(label + ": " + w);
    }
    table.rows.push_back(std::move(row));
    models.push_back({{"label", label}, {"checkpoint", path}, {"sha256", m.sha256}});
  }

  ojson report = artifact_header("evaluation", config);
  report["models"] = models;
  report["table"] = table.to_json();
  report["warnings"] = warnings;
  const std::string csv = provenance(config) + table.to_csv();
  if (!json_out.empty()) emit(json_out, report.dump(2) + "\n", out);
  if (!csv_out.empty()) emit(csv_out, csv, out);
  if (json_out.empty() && csv_out.empty()) out << table.to_csv();
  return 0;
}

int cmd_ablate(const RunConfig& config, std::ostream& out) {
  LoadedModel init = load_model(config.init_checkpoint, "paths.init_checkpoint");
  const auto groups = load_corpus(config);
  const auto datasets = load_datasets(config, true);
  const AblationTable table = ablation_run(init.model, groups, init.tokenizer, datasets,
                                           standard_loss_configs(config.loss), config.refine, config.score);
  const auto dir = resolve_output(config.output);
  write_text(dir / "ablation.csv", provenance(config) + table.to_csv());
  ojson j = artifact_header("ablation", config);
  j["init_checkpoint_sha256"] = init.sha256;
  j["table"] = table.to_json();
  write_text(dir / "ablation.json", j.dump(2) + "\n");
  out << table.to_csv();
  return 0;
}

int cmd_sweep(const RunConfig& config, std::ostream& out) {
  if (config.sweep_alpha.empty() || config.sweep_beta.empty() || config.sweep_gamma.empty())
    throw ConfigError("sweep.alpha, sweep.beta and sweep.gamma must each list at least one value");
  LoadedModel init = load_model(config.init_checkpoint, "paths.init_checkpoint");
  const auto groups = load_corpus(config);
  const auto datasets = load_datasets(config, true);

  std::vector<RunConfig> runs;
  Rng seeds(config.seed);
  for (double a : config.sweep_alpha)
    for (double b : config.sweep_beta)
      for (double g : config.sweep_gamma) {
        RunConfig rc = config;
        rc.loss = {a, b, g};
        rc.loss.validate();
        rc.seed = seeds.next_u64();
        rc.refine.seed = rc.seed;
        rc.pretrain.seed = rc.seed;
        runs.push_back(std::move(rc));
      }

  struct Outcome {
    std::size_t index;
    double mean;
    std::vector<double> accuracy;
  };
  std::vector<Outcome> outcomes;
  const auto dir = resolve_output(config.output) / "sweep";
  for (std::size_t i = 0; i < runs.size(); ++i) {
    const RunConfig& rc = runs[i];
    EncoderModel model = init.model.clone();
    Discriminator disc = make_discriminator(model, rc.refine);
    const RefineResult result = refine(model, disc, groups, init.tokenizer, rc.loss, rc.refine, rc.score);
    char name[32];
    std::snprintf(name, sizeof name, "run-%03zu", i);
    write_text(dir / name / "refine_log.csv", refine_log_csv(rc, result.log));
    ojson meta = artifact_header("refine", rc);
    meta["vocabulary"] = init.metadata["vocabulary"];
    meta["init_checkpoint_sha256"] = init.sha256;
    model.save(dir / name / "refined.ckpt", meta);

    Outcome o{i, 0.0, {}};
    for (const auto& d : datasets) o.accuracy.push_back(evaluate(model, init.tokenizer, d.instances, d.name).accuracy);
    o.mean = std::accumulate(o.accuracy.begin(), o.accuracy.end(), 0.0) / static_cast<double>(o.accuracy.size());
    outcomes.push_back(std::move(o));
  }
  std::stable_sort(outcomes.begin(), outcomes.end(), [](const Outcome& a, const Outcome& b) { return a.mean > b.mean; });

  std::string csv = provenance(config) + "rank,run,alpha,beta,gamma,seed,config_hash,mean_accuracy";
  for (const auto& d : datasets) csv += "," + d.name;
  csv += "\n";
  ojson ranked = ojson::array();
  for (std::size_t r = 0; r < outcomes.size(); ++r) {
    const auto& o = outcomes[r];
    const RunConfig& rc = runs[o.index];
    csv += std::to_string(r + 1) + "," + std::to_string(o.index) + "," + format_real(rc.loss.alpha) + "," +
           format_real(rc.loss.beta) + "," + format_real(rc.loss.gamma) + "," + std::to_string(rc.seed) + "," +
           rc.hash() + "," + format_real(o.mean);
    for (double a : o.accuracy) csv += "," + format_real(a);
    csv += "\n";
    ojson row;
    row["rank"] = r + 1;
    row["run"] = o.index;
    row["weights"] = rc.loss.to_json();
    row["seed"] = rc.seed;
    row["config_hash"] = rc.hash();
    row["mean_accuracy"] = o.mean;
    row["accuracy"] = o.accuracy;
    ranked.push_back(std::move(row));
  }
  write_text(dir / "sweep.csv", csv);
  ojson j = artifact_header("sweep", config);
  j["init_checkpoint_sha256"] = init.sha256;
  j["datasets"] = ojson::array();
  for (const auto& d : datasets) j["datasets"].push_back(d.name);
  j["runs"] = ranked;
  j["best"] = ranked.front();
  write_text(dir / "sweep.json", j.dump(2) + "\n");
  out << ojson{{"command", "sweep"}, {"runs", runs.size()}, {"best", ranked.front()}}.dump() << "\n";
  return 0;
}

int cmd_score(const RunConfig& config, std::string checkpoint, const SchemaInstance& inst, std::ostream& out) {
  if (checkpoint.empty()) checkpoint = !config.checkpoint.empty() ? config.checkpoint : config.init_checkpoint;
  LoadedModel m = load_model(checkpoint, "checkpoint");
  const CandidateScore s1 = score_candidate(m.model, m.tokenizer, inst, 1);
  const CandidateScore s2 = score_candidate(m.model, m.tokenizer, inst, 2);
  auto one = [](const CandidateScore& s, const std::string& text) {
    ojson j{{"text", text}, {"log_prob", std::isfinite(s.log_prob) ? ojson(s.log_prob) : ojson(format_real(s.log_prob))},
            {"tokens", s.tokens}};
    if (s.warning) j["warning"] = *s.warning;
    return j;
  };
  out << ojson{{"sentence", inst.sentence},
               {"candidate1", one(s1, inst.candidate1)},
               {"candidate2", one(s2, inst.candidate2)},
               {"choice", resolve(s1, s2)},
               {"checkpoint_sha256", m.sha256}}
             .dump()
      << "\n";
  return 0;
}

std::string one_line(std::string s) {
  std::replace(s.begin(), s.end(), '\n', ' ');
  return s;
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"contrastive refinement of a masked LM for zero-shot pronoun resolution", "cref"};
  app.require_subcommand(1);

  CommonOptions common;
  auto add_common = [&](CLI::App* sub, bool target_mode) {
    sub->add_option("--config", common.config_path, "JSON run configuration");
    sub->add_option("--seed", common.seed, "run seed (overrides the config)");
    if (target_mode)
      sub->add_option("--target-mode", common.target_mode, "frozen-init or stop-gradient-current");
    sub->allow_extras();
    sub->footer("Any config value can be overridden with --section.key=value.");
  };

  std::string synth_dir = "synthetic";
  std::size_t synth_groups = 50, synth_lines = 500;
  std::uint64_t synth_seed = 0;
  auto* synth = app.add_subcommand("synth", "write a synthetic corpus, two benchmarks and a starter config");
  synth->add_option("--out", synth_dir, "output directory (relative to CREF_OUTPUT_ROOT)");
  synth->add_option("--groups", synth_groups, "perturbation groups");
  synth->add_option("--lines", synth_lines, "benchmark lines per dataset (each has a twin)");
  synth->add_option("--seed", synth_seed, "generator seed");

  auto* pretrain = app.add_subcommand("pretrain", "train the initial masked LM on the corpus sentences");
  add_common(pretrain, false);
  auto* refine_cmd = app.add_subcommand("refine", "refine an initial checkpoint with the perturbation losses");
  add_common(refine_cmd, true);

  std::string baseline, refined, json_out, csv_out;
  auto* evaluate_cmd = app.add_subcommand("evaluate", "zero-shot accuracy of baseline and refined checkpoints");
  add_common(evaluate_cmd, false);
  evaluate_cmd->add_option("--baseline", baseline, "initial checkpoint");
  evaluate_cmd->add_option("--refined", refined, "refined checkpoint");
  evaluate_cmd->add_option("--json", json_out, "write the JSON report here ('-' for stdout)");
  evaluate_cmd->add_option("--csv", csv_out, "write the CSV table here ('-' for stdout)");

  auto* ablate = app.add_subcommand("ablate", "baseline plus the four loss configurations");
  add_common(ablate, true);
  auto* sweep = app.add_subcommand("sweep", "refine over the sweep.alpha x beta x gamma grid, ranked by accuracy");
  add_common(sweep, true);

  std::string score_ckpt;
  SchemaInstance inst;
  auto* score = app.add_subcommand("score", "log-probabilities of both candidates for one sentence");
  add_common(score, false);
  score->add_option("--checkpoint", score_ckpt, "checkpoint to score with");
  score->add_option("--sentence", inst.sentence, "sentence with '_' at the pronoun slot")->required();
  score->add_option("--candidate1", inst.candidate1)->required();
  score->add_option("--candidate2", inst.candidate2)->required();

  std::string command = "cref";
  try {
    std::vector<std::string> reversed(args.rbegin(), args.rend());
    app.parse(reversed);
    CLI::App* sub = app.get_subcommands().front();
    command = sub->get_name();
    if (sub == synth) return cmd_synth(synth_dir, synth_groups, synth_lines, synth_seed, out);
    const RunConfig config = resolve(common, sub->remaining());
    if (sub == pretrain) return cmd_pretrain(config, out);
    if (sub == refine_cmd) return cmd_refine(config, out);
    if (sub == evaluate_cmd) return cmd_evaluate(config, baseline, refined, json_out, csv_out, out);
    if (sub == ablate) return cmd_ablate(config, out);
    if (sub == sweep) return cmd_sweep(config, out);
    return cmd_score(config, score_ckpt, inst, out);
  } catch (const CLI::ParseError& e) {
    if (e.get_exit_code() == 0) {
      out << app.help();
      return 0;
    }
    err << ojson{{"status", "error"}, {"command", command}, {"kind", "usage"}, {"message", one_line(e.what())}}
               .dump()
        << "\n";
    return 2;
  } catch (const std::exception& e) {
    err << ojson{{"status", "error"}, {"command", command}, {"kind", "runtime"}, {"message", one_line(e.what())}}
               .dump()
        << "\n";
    return 1;
  }
}

}  // namespace cref::cli
