// End-to-end acceptance run: one PASS/FAIL line per criterion, nonzero exit
// if any fails. Heavy steps go through the CLI in-process.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <sstream>

#include <json.hpp>

#include "commands.hpp"
#include "cref/core/hash.hpp"
#include "cref/eval/ablation.hpp"
#include "cref/refine/refine.hpp"
#include "cref/synth/synthetic.hpp"
#include "cref/text/vocabulary.hpp"
#include "support/op_gradients.hpp"
#include "support/oracles.hpp"
#include "support/scripted_models.hpp"
#include "support/stacks.hpp"

namespace fs = std::filesystem;
using namespace cref;
using nlohmann::json;

namespace {

struct Verdict {
  bool pass = true;
  std::string detail;

  // Records a failed condition without stopping the criterion.
  void require(bool ok, const std::string& what) {
    if (!ok) {
      pass = false;
      detail += (detail.empty() ? "" : "; ") + std::string("failed: ") + what;
    }
  }
  void note(const std::string& s) { detail += (detail.empty() ? "" : "; ") + s; }
};

std::string fmt(const char* f, double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, v);
  return buf;
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), {}};
}

// Runs the CLI; throws with its error line on failure.
json run_cli(std::vector<std::string> args) {
  std::ostringstream out, err;
  if (cref::cli::run(args, out, err) != 0) throw std::runtime_error("cref " + args[0] + ": " + err.str());
  const std::string text = out.str();
  json j = json::parse(text, nullptr, false);
  return j.is_discarded() ? json(text) : j;
}

constexpr std::size_t kDim = 4, kLen = 10;

std::vector<RefinementPair> random_batch(Rng& rng, std::size_t samples, bool as_param) {
  std::vector<RefinementPair> pairs;
  for (std::size_t i = 0; i < samples; ++i)
    for (auto kind : kAllPerturbations)
      pairs.push_back({i, kind, testing::random_stack(rng, 1 + rng.index(6), kDim, kLen),
                       testing::random_stack(rng, 1 + rng.index(6), kDim, kLen, true, as_param)});
  return pairs;
}

Discriminator small_discriminator(std::uint64_t seed, double dropout) {
  DiscriminatorConfig dc;
  dc.input_dim = kDim;
  dc.hidden_dim = 3;
  dc.dropout = dropout;
  return Discriminator(dc, seed);
}

// ---- 1 ---------------------------------------------------------------------

Verdict gradient_suite() {
  Verdict v;
  const auto t0 = std::chrono::steady_clock::now();
  v.require(kDoublePrecision, "64-bit build");
  const auto ops = testing::op_gradient_cases();
  double worst_op = 0;
  std::string worst_name;
  for (const auto& op : ops) {
    const double e = testing::worst_op_gradient_error(op, 100);
    if (e > worst_op) worst_op = e, worst_name = op.name;
  }
  v.require(worst_op < 1e-4, "op gradients within 1e-4 (" + worst_name + ")");

  // Each loss term alone, then all three, on 100 random batches each.
  Rng rng(41);
  double worst_loss[4] = {0, 0, 0, 0};
  for (int term = 0; term < 4; ++term)
    for (int t = 0; t < 100; ++t) {
      // The contrastive term needs two samples to have any pair at all.
      const std::size_t n = (term == 1 ? 2 : 1) + rng.index(3);
      std::vector<RefinementPair> pairs;
      // Two distinct kinds per sample keep batch normalization off the PReLU kink.
      for (std::size_t i = 0; i < n; ++i)
        for (auto kind : {PerturbationKind::Tense, kAllPerturbations[2 + rng.index(6)]})
          pairs.push_back({i, kind, testing::random_stack(rng, 1 + rng.index(4), kDim, kLen),
                           testing::random_stack(rng, 1 + rng.index(4), kDim, kLen, true, true)});
      Discriminator disc = small_discriminator(static_cast<std::uint64_t>(t), 0.2);
      LossWeights w{0, 0, 0};
      if (term == 0 || term == 3) w.alpha = 0.1 + rng.uniform() * 2;
      if (term == 1 || term == 3) w.beta = 0.1 + rng.uniform() * 2;
      if (term == 2 || term == 3) w.gamma = 0.1 + rng.uniform() * 2;
      std::vector<Tensor> inputs;
      for (const auto& p : pairs) inputs.push_back(p.generated.hidden);
      // The first discriminator bias is cancelled by batch statistics.
      if (w.gamma > 0)
        for (const auto& p : disc.parameters())
          if (p.name != "discriminator.fc1.bias") inputs.push_back(p.tensor);
      const std::uint64_t drop_seed = rng.next_u64();
      const double e = testing::max_gradient_error(
          [&](const std::vector<Tensor>& in) {
            auto local = pairs;
            for (std::size_t i = 0; i < local.size(); ++i) local[i].generated.hidden = in[i];
            Rng drop(drop_seed);
            return refinement_losses(local, &disc, w, {.window_radius = 1}, {.training = true, .rng = &drop}).total;
          },
          inputs);
      worst_loss[term] = std::max(worst_loss[term], e);
    }
  const char* names[4] = {"L_R", "L_C", "L_D", "total"};
  for (int term = 0; term < 4; ++term) {
    v.require(worst_loss[term] < 1e-4, std::string(names[term]) + " gradient within 1e-4");
  }
  const double elapsed = seconds_since(t0);
  v.require(elapsed < 60, "runtime under 1 min");
  v.note(std::to_string(ops.size()) + " ops x 100, worst " + fmt("%.2e", worst_op) + "; losses worst L_R " +
         fmt("%.2e", worst_loss[0]) + " L_C " + fmt("%.2e", worst_loss[1]) + " L_D " + fmt("%.2e", worst_loss[2]) +
         " total " + fmt("%.2e", worst_loss[3]) + "; " + fmt("%.1f s", elapsed));
  return v;
}

// ---- 2 ---------------------------------------------------------------------

Verdict metric_oracle() {
  Verdict v;
  Rng rng(42);
  double worst = 0;
  for (int t = 0; t < 20; ++t) {
    const auto a = testing::random_stack(rng, 1 + rng.index(8), 6, 12, rng.bernoulli(0.5));
    const auto b = testing::random_stack(rng, 1 + rng.index(8), 6, 12, rng.bernoulli(0.5));
    const std::size_t w = 12 + rng.index(4);
    worst = std::max(worst, std::abs(windowed_bertscore(a, b, {.window_radius = w}).item() - oracle::score(a, b, -1)));
  }
  v.require(worst <= 1e-9, "wide window equals brute force to 1e-9");

  double self_err = 0;
  for (int t = 0; t < 20; ++t) {
    const auto a = testing::random_stack(rng, 1 + rng.index(8), 6, 12);
    for (std::size_t w : {0, 1, 3, 20})
      self_err = std::max(self_err, std::abs(windowed_bertscore(a, a, {.window_radius = w}).item() - 1.0));
  }
  v.require(self_err <= 1e-6, "self-similarity 1 +- 1e-6");

  // Equal eligible lengths keep every window non-empty, which monotonicity needs.
  std::size_t violations = 0;
  for (int t = 0; t < 50; ++t) {
    const std::size_t len = 2 + rng.index(7);
    const auto a = testing::random_stack(rng, len, 5, 12);
    const auto b = testing::random_stack(rng, len, 5, 12, true);
    double prev[3] = {-2, -2, -2};
    for (std::size_t w = 0; w <= len; ++w) {
      const ScoreParts s = windowed_bertscore_parts(a, b, {.window_radius = w});
      const double now[3] = {s.precision.item(), s.recall.item(), s.f1.item()};
      for (int k = 0; k < 3; ++k) {
        if (now[k] < prev[k] - 1e-12) ++violations;
        prev[k] = now[k];
      }
    }
  }
  v.require(violations == 0, "monotone in w");
  v.note("brute-force gap " + fmt("%.1e", worst) + ", self " + fmt("%.1e", self_err) + ", monotonicity violations " +
         std::to_string(violations) + "/50 equal-length pairs");
  return v;
}

// ---- 3 ---------------------------------------------------------------------

Verdict loss_oracles() {
  Verdict v;
  Rng rng(43);
  double worst[3] = {0, 0, 0};
  for (int t = 0; t < 25; ++t) {
    const auto pairs = random_batch(rng, 1 + rng.index(4), false);
    const std::size_t w = rng.index(4);
    const ScoreConfig sc{.window_radius = w};
    const double alpha = rng.uniform() * 200, beta = rng.uniform() * 10, gamma = rng.uniform() * 10;
    worst[0] = std::max(worst[0], std::abs(reconstruction_loss(pairs, alpha, sc).item() -
                                           oracle::reconstruction(pairs, alpha, static_cast<long>(w))));
    worst[1] = std::max(worst[1], std::abs(contrastive_loss(pairs, beta, sc).item() -
                                           oracle::contrastive(pairs, beta, static_cast<long>(w))));
    Discriminator disc = small_discriminator(static_cast<std::uint64_t>(t), 0.0);
    Rng drop(0);
    worst[2] = std::max(worst[2], std::abs(diversity_loss(pairs, disc, gamma, {}, {.training = true, .rng = &drop}).item() -
                                           oracle::diversity(pairs, disc, gamma)));
  }
  v.require(worst[0] <= 1e-9 && worst[1] <= 1e-9 && worst[2] <= 1e-9, "losses match loop oracles to 1e-9");

  double uniform_gap = 0;
  for (std::size_t n = 1; n <= 4; ++n) {
    const auto pairs = random_batch(rng, n, false);
    Discriminator disc = small_discriminator(n, 0.0);
    for (auto& p : disc.parameters())
      if (p.name.find("fc2") != std::string::npos)
        for (auto& x : p.tensor.mutable_values()) x = 0;
    Rng drop(0);
    const double got = diversity_loss(pairs, disc, 2.5, {}, {.training = true, .rng = &drop}).item();
    uniform_gap = std::max(uniform_gap, std::abs(got - 2.5 * static_cast<double>(n) * 8 * std::log(7.0)));
  }
  v.require(uniform_gap <= 1e-9, "uniform discriminator gives gamma N |P| log 7");
  v.note("max gaps L_R " + fmt("%.1e", worst[0]) + " L_C " + fmt("%.1e", worst[1]) + " L_D " + fmt("%.1e", worst[2]) +
         ", uniform " + fmt("%.1e", uniform_gap));
  return v;
}

// ---- 4 ---------------------------------------------------------------------

double brute_log_prob(const std::vector<real>& row, int target) {
  double mx = -INFINITY;
  for (real x : row) mx = std::max(mx, static_cast<double>(x));
  double z = 0;
  for (real x : row) z += std::exp(static_cast<double>(x) - mx);
  std::vector<double> logp;
  for (real x : row) logp.push_back((static_cast<double>(x) - mx) - std::log(z));
  return logp[static_cast<std::size_t>(target)];
}

Verdict scorer_oracle() {
  Verdict v;
  const std::vector<SchemaInstance> items{
      {"the trophy did not fit into the suitcase because _ was too big .", "the trophy", "the suitcase", 1,
       std::nullopt},
      {"the cup broke the big rock because _ was fragile .", "the cup", "the big rock", 1, std::nullopt},
      {"_ paid the waiter .", "man", "waiter", 1, std::nullopt}};
  const Tokenizer tok(Vocabulary::build(collect_texts(items)), 32);
  const std::size_t V = tok.vocab().size();
  Rng rng(44);
  std::size_t mismatches = 0, checked = 0;
  for (int t = 0; t < 30; ++t) {
    std::vector<std::vector<real>> rows(4, std::vector<real>(V));
    for (auto& r : rows)
      for (auto& x : r) x = static_cast<real>(rng.normal(0, 1 + t));
    testing::ScriptedModel model(V, [&](const TokenSequence&, std::size_t j) { return rows[j]; });
    for (const auto& inst : items)
      for (int which : {1, 2}) {
        const auto words = split_words(inst.candidate(which));
        double expect = 0;
        for (std::size_t j = 0; j < words.size(); ++j) expect += brute_log_prob(rows[j], tok.vocab().id(words[j]));
        expect /= static_cast<double>(words.size());
        mismatches += score_candidate(model, tok, inst, which).log_prob != expect;
        ++checked;
      }
  }
  v.require(mismatches == 0, "exact match with full-softmax enumeration");

  testing::ScriptedModel flat(V, [&](const TokenSequence&, std::size_t) { return std::vector<real>(V, 0.25); });
  SchemaInstance swapped = items[0];
  std::swap(swapped.candidate1, swapped.candidate2);
  v.require(resolve(flat, tok, items[0]) == 1 && resolve(flat, tok, swapped) == 1, "ties go to candidate 1");

  testing::ScriptedModel halves(V, [&](const TokenSequence&, std::size_t j) {
    std::vector<real> row(V, -1e4);
    row[static_cast<std::size_t>(tok.vocab().id(j == 0 ? "the" : "trophy"))] = 1.0;
    row[static_cast<std::size_t>(tok.vocab().id("suitcase"))] = 1.0;
    return row;
  });
  const auto two = score_candidate(halves, tok, items[0], 1);
  v.require(two.tokens == 2 && two.log_prob == std::log(0.5), "two tokens at 0.5 give log 0.5");
  v.note(std::to_string(checked) + " candidate scores bit-equal to enumeration; two-token case " +
         fmt("%.17g", two.log_prob));
  return v;
}

// ---- 5..8: pipeline through the CLI ------------------------------------------

struct Pipeline {
  fs::path root;
  std::string config;
  std::vector<std::string> model_args{
      "--encoder.layers=2",          "--encoder.heads=4",         "--encoder.model_dim=64",
      "--encoder.ff_dim=128",        "--encoder.max_len=32",      "--encoder.dropout=0",
      "--pretrain.epochs=400",       "--pretrain.batch_size=16",  "--pretrain.select_prob=0.4",
      "--pretrain.learning_rate=0.005", "--pretrain.warmup_steps=50", "--pretrain.weight_decay=0",
      "--refine.epochs=20",          "--refine.lr=0.01",          "--refine.warmup_steps=20"};

  std::vector<std::string> args(std::string command, std::string out, std::vector<std::string> extra = {}) const {
    std::vector<std::string> a{std::move(command), "--config", config, "--seed", "11", "--paths.output=" + out};
    a.insert(a.end(), model_args.begin(), model_args.end());
    a.insert(a.end(), extra.begin(), extra.end());
    return a;
  }
  fs::path path(const std::string& rel) const { return root / rel; }
};

Verdict end_to_end(const Pipeline& p) {
  Verdict v;
  const auto t0 = std::chrono::steady_clock::now();
  const json pre = run_cli(p.args("pretrain", "main"));
  const json ref = run_cli(p.args("refine", "main", {"--paths.init_checkpoint=" + p.path("main/init.ckpt").string()}));
  const double elapsed = seconds_since(t0);

  const auto corpus = load_perturbation_corpus(p.path("data/corpus.jsonl")).groups;
  const std::size_t vocab = pre["vocab_size"].get<std::size_t>();
  const double acc = pre["masked_token_accuracy"].get<double>();
  const double reduction = ref["loss"]["relative_reduction"].get<double>();
  const double probe = ref["probes"]["kind_accuracy"].get<double>();
  const double dist = ref["probes"]["min_same_kind_distance"].get<double>();
  v.require(corpus.size() >= 50, ">= 50 groups");
  v.require(vocab <= 500, "vocabulary <= 500");
  v.require(acc >= 0.95, "masked-token accuracy >= 95%");
  v.require(reduction >= 0.30, "total loss reduced >= 30% from first-epoch mean");
  v.require(probe > 1.0 / 8 + 0.10, "kind probe > 1/8 + 0.10");
  v.require(dist > 0, "same-kind distance > 0");
  v.require(elapsed < 15 * 60, "runtime under 15 min");
  v.note(std::to_string(corpus.size()) + " groups, vocab " + std::to_string(vocab) + ", masked acc " +
         fmt("%.4f", acc) + ", total " + fmt("%.1f", ref["loss"]["first_epoch_mean_total"].get<double>()) + " -> " +
         fmt("%.1f", ref["loss"]["last_epoch_mean_total"].get<double>()) + " (" + fmt("%.1f%%", 100 * reduction) +
         " lower), probe " + fmt("%.3f", probe) + ", min distance " + fmt("%.3g", dist) + ", " +
         fmt("%.0f s", elapsed));
  return v;
}

Verdict ablation_structure(const Pipeline& p) {
  Verdict v;
  const std::vector<std::string> extra{"--paths.init_checkpoint=" + p.path("main/init.ckpt").string(),
                                       "--refine.epochs=2"};
  run_cli(p.args("ablate", "ablation", extra));
  const std::string first = slurp(p.path("ablation/ablation.csv"));
  const std::string first_json = slurp(p.path("ablation/ablation.json"));
  run_cli(p.args("ablate", "ablation", extra));
  v.require(slurp(p.path("ablation/ablation.csv")) == first && slurp(p.path("ablation/ablation.json")) == first_json,
            "two invocations byte-identical");

  std::istringstream in(first);
  std::vector<std::string> rows;
  for (std::string line; std::getline(in, line);)
    if (!line.empty() && line[0] != '#') rows.push_back(line);
  const std::vector<std::string> labels{kBaselineLabel, "L_C+L_D", "L_R+L_D", "L_R+L_C", "L_R+L_C+L_D"};
  v.require(rows.size() == 6, "header + 5 rows");
  std::size_t columns = 0;
  if (!rows.empty()) columns = static_cast<std::size_t>(std::count(rows[0].begin(), rows[0].end(), ','));
  v.require(columns >= 2, ">= 2 datasets");
  for (std::size_t i = 0; i < labels.size() && i + 1 < rows.size(); ++i)
    v.require(rows[i + 1].rfind(labels[i] + ",", 0) == 0, "row " + labels[i]);
  v.note(std::to_string(rows.size() > 0 ? rows.size() - 1 : 0) + " rows x " + std::to_string(columns) +
         " datasets, byte-identical reruns");
  for (std::size_t i = 1; i < rows.size(); ++i) v.note(rows[i]);
  return v;
}

Verdict zero_shot_purity(const Pipeline& p) {
  Verdict v;
  const fs::path refined = p.path("main/refined.ckpt");
  const std::string before = file_sha256(refined);
  const fs::path init = p.path("main/init.ckpt");
  const std::string init_before = file_sha256(init);
  run_cli(p.args("evaluate", "main",
             {"--baseline", init.string(), "--refined", refined.string(), "--json", p.path("main/eval.json").string(),
              "--csv", p.path("main/eval.csv").string()}));
  v.require(file_sha256(refined) == before && file_sha256(init) == init_before, "checkpoint hashes unchanged");

  // Balanced benchmark: 500 lines, each with its twin.
  const auto bench = load_benchmark(p.path("data/synthetic-physical.jsonl"));
  nlohmann::json meta;
  const EncoderModel trained = EncoderModel::load(init, &meta);
  const Tokenizer tok(Vocabulary::from_json(meta["vocabulary"]), trained.config().max_len);
  EncoderConfig cfg = trained.config();
  const EncoderModel untrained(cfg, 12345);
  const auto rep = evaluate(untrained, tok, bench, "synthetic-physical");
  const auto hashed = evaluate(testing::HashModel(tok.vocab().size(), 99), tok, bench, "synthetic-physical");
  std::size_t gold1 = 0;
  for (const auto& d : rep.decisions) gold1 += d.gold == 1;
  v.require(rep.count == 1000 && gold1 == 500, "1000 balanced items");
  v.require(std::abs(rep.accuracy - 0.5) <= 0.05, "untrained encoder at 0.5 +- 0.05");
  v.require(std::abs(hashed.accuracy - 0.5) <= 0.05, "random-logit model at 0.5 +- 0.05");
  const auto table = json::parse(slurp(p.path("main/eval.json")))["table"]["rows"];
  v.note("hash " + before.substr(0, 12) + " unchanged; random init " + fmt("%.3f", rep.accuracy) +
         ", random logits " + fmt("%.3f", hashed.accuracy) + " on " + std::to_string(rep.count) + " items");
  for (const auto& row : table) {
    std::string line = row["label"].get<std::string>();
    for (const auto& a : row["accuracy"]) line += " " + fmt("%.3f", a.get<double>());
    v.note(line);
  }
  return v;
}

Verdict determinism(const Pipeline& p) {
  Verdict v;
  // The full architecture with dropout on, on a shorter schedule.
  const std::vector<std::string> extra{"--encoder.dropout=0.1", "--pretrain.epochs=20", "--refine.epochs=4"};
  std::string ckpt[2][2];
  for (int run = 0; run < 2; ++run) {
    run_cli(p.args("pretrain", "determinism", extra));
    ckpt[run][0] = slurp(p.path("determinism/init.ckpt"));
    auto r = extra;
    r.push_back("--paths.init_checkpoint=" + p.path("determinism/init.ckpt").string());
    run_cli(p.args("refine", "determinism", r));
    ckpt[run][1] = slurp(p.path("determinism/refined.ckpt"));
  }
  v.require(!ckpt[0][0].empty() && ckpt[0][0] == ckpt[1][0], "pretrain checkpoints bit-identical");
  v.require(!ckpt[0][1].empty() && ckpt[0][1] == ckpt[1][1], "refine checkpoints bit-identical");
  v.require(ckpt[0][0] != ckpt[0][1], "refinement changed the weights");
  v.note("pretrain " + sha256_hex(ckpt[0][0]).substr(0, 12) + ", refine " + sha256_hex(ckpt[0][1]).substr(0, 12) +
         " identical across two runs");
  return v;
}

}  // namespace

int main() {
  const fs::path root = fs::temp_directory_path() / "cref_acceptance";
  fs::remove_all(root);
  fs::create_directories(root);
  setenv("CREF_OUTPUT_ROOT", root.c_str(), 1);

  Pipeline p;
  p.root = root;
  p.config = (root / "data" / "run.json").string();

  int failures = 0;
  auto report = [&](int id, const char* name, const std::function<Verdict()>& check) {
    Verdict v;
    try {
      v = check();
    } catch (const std::exception& e) {
      v.pass = false;
      v.note(std::string("error: ") + e.what());
    }
    failures += v.pass ? 0 : 1;
    std::cout << (v.pass ? "PASS" : "FAIL") << " [" << id << "] " << name << ": " << v.detail << std::endl;
  };

  report(1, "gradient suite", gradient_suite);
  report(2, "metric oracle", metric_oracle);
  report(3, "loss oracles", loss_oracles);
  report(4, "scorer oracle", scorer_oracle);
  bool data_ok = true;
  try {
    run_cli({"synth", "--out", "data", "--groups", "50", "--lines", "500", "--seed", "0"});
  } catch (const std::exception& e) {
    std::cerr << e.what() << "\n";
    data_ok = false;
  }
  auto needs_data = [&](const std::function<Verdict()>& f) {
    return [&, f] {
      if (!data_ok) throw std::runtime_error("synthetic data could not be generated");
      return f();
    };
  };
  report(5, "end-to-end smoke", needs_data([&] { return end_to_end(p); }));
  report(6, "ablation structure", needs_data([&] { return ablation_structure(p); }));
  report(7, "zero-shot purity", needs_data([&] { return zero_shot_purity(p); }));
  report(8, "determinism", needs_data([&] { return determinism(p); }));
  std::cout << (failures == 0 ? "all criteria passed" : std::to_string(failures) + " criteria failed") << std::endl;
  return failures == 0 ? 0 : 1;
}
