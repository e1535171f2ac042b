#include <doctest.h>

#include <cmath>
#include <filesystem>

#include "cref/core/ops.hpp"
#include "cref/encoder/pretrain.hpp"
#include "cref/text/vocabulary.hpp"

using namespace cref;

namespace {

EncoderConfig tiny_config(std::size_t vocab, std::size_t layers = 2) {
  EncoderConfig c;
  c.layers = layers;
  c.heads = 2;
  c.model_dim = 16;
  c.ff_dim = 32;
  c.max_len = 12;
  c.vocab_size = vocab;
  c.dropout = 0.0;
  return c;
}

TokenSequence make_seq(std::vector<int> body, std::size_t max_len) {
  TokenSequence s;
  s.ids.assign(max_len, Vocabulary::kPad);
  s.ids[0] = Vocabulary::kCls;
  for (std::size_t i = 0; i < body.size(); ++i) s.ids[i + 1] = body[i];
  s.ids[body.size() + 1] = Vocabulary::kSep;
  s.length = body.size() + 2;
  return s;
}

std::vector<TokenSequence> random_corpus(std::size_t n, std::size_t words, std::size_t len,
                                         std::size_t max_len, Rng& rng) {
  std::vector<TokenSequence> out;
  for (std::size_t k = 0; k < n; ++k) {
    std::vector<int> body;
    for (std::size_t i = 0; i < len; ++i)
      body.push_back(Vocabulary::kFirstWord + static_cast<int>(rng.index(words)));
    out.push_back(make_seq(body, max_len));
  }
  return out;
}

bool same_values(const Tensor& a, const Tensor& b) {
  return std::equal(a.values().begin(), a.values().end(), b.values().begin(), b.values().end());
}

const int W = Vocabulary::kFirstWord;

}  // namespace

TEST_CASE("config validation") {
  EncoderConfig c = tiny_config(40);
  CHECK_NOTHROW(c.validate());
  c.heads = 3;
  CHECK_THROWS_WITH_AS(c.validate(), doctest::Contains("divisible"), std::invalid_argument);
  c = tiny_config(40);
  c.dropout = 1.0;
  CHECK_THROWS(c.validate());
  c = tiny_config(5);
  CHECK_THROWS(c.validate());
  CHECK(EncoderConfig::from_json(tiny_config(40).to_json()) == tiny_config(40));
}

TEST_CASE("encode is deterministic in eval mode and carries the mask") {
  EncoderModel m(tiny_config(40), 1);
  const auto seq = make_seq({W, W + 1, W + 2}, 12);
  const auto a = m.encode(seq), b = m.encode(seq);
  CHECK(same_values(a.hidden, b.hidden));
  CHECK(a.rows() == 12);
  CHECK(a.length() == 5);
  for (std::size_t r = 5; r < 12; ++r)
    for (std::size_t c = 0; c < 16; ++c) CHECK(a.hidden.at(r, c) == 0.0);
}

TEST_CASE("swapping two tokens changes the stack") {
  EncoderModel m(tiny_config(40), 2);
  const auto a = m.encode(make_seq({W, W + 1, W + 2}, 12));
  const auto b = m.encode(make_seq({W + 1, W, W + 2}, 12));
  // Row of token W at position 1 versus the same token at position 2.
  double diff = 0;
  for (std::size_t c = 0; c < 16; ++c) diff += std::abs(a.hidden.at(1, c) - b.hidden.at(2, c));
  CHECK(diff > 1e-6);
}

TEST_CASE("zero-layer stack is normalized token plus position embedding") {
  EncoderModel m(tiny_config(40, 0), 3);
  const auto seq = make_seq({W + 4, W + 7}, 12);
  const auto stack = m.encode(seq);
  const auto params = m.encoder_parameters();
  const Tensor& tok = params[0].tensor;
  const Tensor& pos = params[1].tensor;
  const std::size_t d = 16;
  for (std::size_t i = 0; i < seq.length; ++i) {
    std::vector<double> x(d);
    double mu = 0;
    for (std::size_t c = 0; c < d; ++c) {
      x[c] = tok.at(seq.ids[i], c) + pos.at(i, c);
      mu += x[c];
    }
    mu /= d;
    double var = 0;
    for (double v : x) var += (v - mu) * (v - mu);
    var /= d;
    for (std::size_t c = 0; c < d; ++c)
      CHECK(stack.hidden.at(i, c) == doctest::Approx((x[c] - mu) / std::sqrt(var + 1e-5)).epsilon(1e-12));
  }
}

TEST_CASE("encode output ignores padded content") {
  EncoderModel m(tiny_config(40), 4);
  auto seq = make_seq({W, W + 3}, 12);
  auto dirty = seq;
  for (std::size_t i = seq.length; i < 12; ++i) dirty.ids[i] = W + 9;
  CHECK(same_values(m.encode(seq).hidden, m.encode(dirty).hidden));
}

TEST_CASE("out-of-range ids are rejected") {
  EncoderModel m(tiny_config(40), 5);
  CHECK_THROWS_AS(m.encode(make_seq({W, 40}, 12)), std::out_of_range);
  CHECK_THROWS_AS(m.encode(make_seq({-1}, 12)), std::out_of_range);
}

TEST_CASE("mlm softmax is normalized and near uniform at init") {
  const std::size_t V = 60;
  EncoderModel m(tiny_config(V), 6);
  const Tensor probs = softmax(m.mlm_logits(make_seq({W, Vocabulary::kMask, W + 2}, 12)));
  CHECK(probs.rows() == 12);
  for (std::size_t r = 0; r < probs.rows(); ++r) {
    double total = 0, best = 0;
    for (std::size_t v = 0; v < V; ++v) {
      total += probs.at(r, v);
      best = std::max(best, probs.at(r, v));
    }
    CHECK(std::abs(total - 1.0) < 1e-6);
    CHECK(best < 5.0 / V);
  }
}

TEST_CASE("masking selects fifteen percent of word positions") {
  Rng rng(7);
  const auto seq = make_seq({W, W + 1, W + 2, W + 3, W + 4, W + 5, W + 6, W + 7, W + 8, W + 9}, 12);
  std::size_t selected = 0, masked = 0, kept = 0;
  const std::size_t samples = 10000;
  for (std::size_t s = 0; s < samples; ++s) {
    const auto ex = mask_for_mlm(seq, 40, 0.15, rng);
    selected += ex.positions.size();
    for (std::size_t k = 0; k < ex.positions.size(); ++k) {
      CHECK(Vocabulary::is_word(ex.targets[k]));
      const int now = ex.input.ids[ex.positions[k]];
      if (now == Vocabulary::kMask) ++masked;
      if (now == ex.targets[k]) ++kept;
    }
    CHECK(ex.input.ids[0] == Vocabulary::kCls);
    CHECK(ex.input.ids[11] == Vocabulary::kSep);
  }
  const double frac = static_cast<double>(selected) / (samples * 10.0);
  CHECK(frac == doctest::Approx(0.15).epsilon(0.01 / 0.15));
  CHECK(static_cast<double>(masked) / selected == doctest::Approx(0.8).epsilon(0.03));
  CHECK(static_cast<double>(kept) / selected > 0.09);
}

TEST_CASE("gradient reaches every parameter") {
  Rng rng(8);
  for (bool tied : {true, false}) {
    auto cfg = tiny_config(30);
    cfg.tie_embeddings = tied;
    EncoderModel m(cfg, 9);
    const auto seq = make_seq({W, Vocabulary::kMask, W + 5, Vocabulary::kMask}, 12);
    const std::size_t pos[] = {2, 4};
    const int targets[] = {W + 1, W + 2};
    backward(cross_entropy(m.mlm_logits_at(seq, pos), targets));
    for (const auto& p : m.parameters()) {
      REQUIRE_MESSAGE(p.tensor.has_grad(), p.name);
      double norm = 0;
      for (real g : p.tensor.grad()) norm += g * g;
      CHECK_MESSAGE(norm > 0, p.name);
    }
  }
}

TEST_CASE("pretraining decreases loss and is bit-reproducible") {
  Rng data_rng(10);
  const auto corpus = random_corpus(12, 10, 5, 12, data_rng);
  PretrainConfig pc;
  pc.epochs = 8;
  pc.batch_size = 4;
  pc.seed = 11;
  auto cfg = tiny_config(W + 10);
  cfg.dropout = 0.1;
  EncoderModel a(cfg, 12), b(cfg, 12);
  const auto log_a = pretrain_mlm(a, corpus, pc);
  const auto log_b = pretrain_mlm(b, corpus, pc);
  REQUIRE(log_a.size() > 4);
  double first = 0, last = 0;
  for (std::size_t i = 0; i < 3; ++i) {
    first += log_a[i].loss;
    last += log_a[log_a.size() - 1 - i].loss;
  }
  CHECK(last < first);
  const auto pa = a.parameters(), pb = b.parameters();
  for (std::size_t i = 0; i < pa.size(); ++i) CHECK(same_values(pa[i].tensor, pb[i].tensor));
  CHECK_THROWS(pretrain_mlm(a, {}, pc));
}

TEST_CASE("overfitting twenty sentences recovers masked tokens") {
  Rng data_rng(13);
  const auto corpus = random_corpus(20, 24, 6, 12, data_rng);
  EncoderConfig cfg = tiny_config(W + 24);
  cfg.model_dim = 32;
  cfg.ff_dim = 64;
  EncoderModel m(cfg, 14);
  PretrainConfig pc;
  pc.epochs = 1000;
  pc.batch_size = 10;
  pc.select_prob = 0.15;
  pc.optimizer.learning_rate = 3e-3;
  pc.optimizer.weight_decay = 0.0;
  pc.seed = 15;
  pretrain_mlm(m, corpus, pc);
  const double acc = masked_token_accuracy(m, corpus);
  MESSAGE("overfit accuracy " << acc);
  CHECK(acc >= 0.95);
}

TEST_CASE("checkpoint round trip and clone") {
  auto path = std::filesystem::temp_directory_path() / "cref_encoder_test.ckpt";
  EncoderModel m(tiny_config(40), 16);
  m.save(path, {{"note", "x"}});
  nlohmann::json meta;
  EncoderModel back = EncoderModel::load(path, &meta);
  CHECK(meta["note"] == "x");
  CHECK(back.config() == m.config());
  const auto seq = make_seq({W, W + 1}, 12);
  CHECK(same_values(back.encode(seq).hidden, m.encode(seq).hidden));
  EncoderModel c = m.clone();
  CHECK(same_values(c.encode(seq).hidden, m.encode(seq).hidden));
  Rng rng(1);
  c.reinit_perturbation_embeddings(rng);
  CHECK(same_values(m.encode(seq).hidden, back.encode(seq).hidden));
}
