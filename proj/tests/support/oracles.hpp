#pragma once

// Plain double-loop reference implementations, written without the tensor
// library, used to cross-check the differentiable code paths.

#include <cmath>
#include <cstdlib>
#include <limits>
#include <vector>

#include "cref/encoder/encoder.hpp"
#include "cref/refine/discriminator.hpp"
#include "cref/refine/losses.hpp"
#include "cref/text/vocabulary.hpp"

namespace cref::oracle {

using Rows = std::vector<std::vector<double>>;

struct PlainStack {
  Rows rows;                 // eligible rows only, in order
  std::vector<long> index;   // window coordinate per row
};

inline double cosine(const std::vector<double>& u, const std::vector<double>& v) {
  double dot = 0, nu = 0, nv = 0;
  for (std::size_t i = 0; i < u.size(); ++i) {
    dot += u[i] * v[i];
    nu += u[i] * u[i];
    nv += v[i] * v[i];
  }
  if (nu == 0 || nv == 0) return 0;
  return dot / (std::sqrt(nu) * std::sqrt(nv));
}

// Word tokens (and [MASK]/[UNK]) only, compacted coordinates.
inline PlainStack plain(const EmbeddingStack& s) {
  PlainStack out;
  for (std::size_t i = 0; i < s.source.length; ++i) {
    const int id = s.source.ids[i];
    if (id < Vocabulary::kFirstWord && id != Vocabulary::kMask && id != Vocabulary::kUnk) continue;
    std::vector<double> row(s.hidden.cols());
    for (std::size_t c = 0; c < row.size(); ++c) row[c] = s.hidden.at(i, c);
    out.index.push_back(static_cast<long>(out.rows.size()));
    out.rows.push_back(std::move(row));
  }
  return out;
}

inline double directed(const PlainStack& a, const PlainStack& b, long radius) {
  double total = 0;
  for (std::size_t i = 0; i < a.rows.size(); ++i) {
    double best = -std::numeric_limits<double>::infinity();
    for (std::size_t j = 0; j < b.rows.size(); ++j)
      if (radius < 0 || std::labs(a.index[i] - b.index[j]) <= radius)
        best = std::max(best, cosine(a.rows[i], b.rows[j]));
    total += std::isinf(best) ? 0.0 : best;
  }
  return total / static_cast<double>(a.rows.size());
}

// radius < 0 means unrestricted greedy matching.
inline double score(const PlainStack& a, const PlainStack& b, long radius) {
  const double p = directed(a, b, radius), r = directed(b, a, radius);
  return p * r > 0 ? 2 * p * r / (p + r) : 0.0;
}

inline double score(const EmbeddingStack& a, const EmbeddingStack& b, long radius) {
  return score(plain(a), plain(b), radius);
}

inline std::vector<double> mean_row(const PlainStack& s) {
  std::vector<double> m(s.rows.at(0).size(), 0.0);
  for (const auto& r : s.rows)
    for (std::size_t c = 0; c < m.size(); ++c) m[c] += r[c];
  for (auto& v : m) v /= static_cast<double>(s.rows.size());
  return m;
}

inline double reconstruction(const std::vector<RefinementPair>& pairs, double alpha, long radius) {
  double total = 0;
  for (const auto& p : pairs) total += score(p.target, p.generated, radius);
  return -alpha * total;
}

inline double contrastive(const std::vector<RefinementPair>& pairs, double beta, long radius) {
  double total = 0;
  for (const auto& a : pairs)
    for (const auto& b : pairs)
      if (&a != &b && a.kind == b.kind && a.sample != b.sample)
        total += score(a.generated, b.generated, radius);
  return beta * total;
}

inline double log_odds(const std::vector<double>& logits, std::size_t k, double clamp) {
  double mx = logits[0];
  for (double v : logits) mx = std::max(mx, v);
  double z = 0;
  for (double v : logits) z += std::exp(v - mx);
  double qk = 0, rest = 0;
  for (std::size_t t = 0; t < logits.size(); ++t) {
    const double q = std::exp(logits[t] - mx) / z;
    (t == k ? qk : rest) += q;
  }
  return std::log(std::max(qk, clamp)) - std::log(std::max(rest, clamp));
}

inline std::vector<double> values_of(const Tensor& t) { return {t.values().begin(), t.values().end()}; }

// Discriminator forward in training mode with batch statistics and no dropout.
inline Rows discriminator_logits(const Discriminator& disc, const Rows& pooled) {
  const auto params = disc.parameters();
  const auto w1 = values_of(params[0].tensor), b1 = values_of(params[1].tensor);
  const auto gamma = values_of(params[2].tensor), beta = values_of(params[3].tensor);
  const double slope = params[4].tensor[0];
  const auto w2 = values_of(params[5].tensor), b2 = values_of(params[6].tensor);
  const std::size_t d = pooled[0].size(), h = b1.size(), c = b2.size(), n = pooled.size();
  Rows hidden(n, std::vector<double>(h, 0.0));
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < h; ++j) {
      double acc = b1[j];
      for (std::size_t k = 0; k < d; ++k) acc += pooled[i][k] * w1[k * h + j];
      hidden[i][j] = acc;
    }
  for (std::size_t j = 0; j < h; ++j) {
    double mu = 0, var = 0;
    for (std::size_t i = 0; i < n; ++i) mu += hidden[i][j];
    mu /= n;
    for (std::size_t i = 0; i < n; ++i) var += (hidden[i][j] - mu) * (hidden[i][j] - mu);
    var /= n;
    for (std::size_t i = 0; i < n; ++i) {
      double v = (hidden[i][j] - mu) / std::sqrt(var + disc.config().batch_norm_eps) * gamma[j] + beta[j];
      hidden[i][j] = v > 0 ? v : slope * v;
    }
  }
  Rows out(n, std::vector<double>(c, 0.0));
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < c; ++j) {
      double acc = b2[j];
      for (std::size_t k = 0; k < h; ++k) acc += hidden[i][k] * w2[k * c + j];
      out[i][j] = acc;
    }
  return out;
}

inline double diversity(const std::vector<RefinementPair>& pairs, const Discriminator& disc,
                        double gamma, double clamp = kDefaultProbabilityClamp) {
  Rows pooled;
  for (const auto& p : pairs) pooled.push_back(mean_row(plain(p.generated)));
  const Rows logits = discriminator_logits(disc, pooled);
  double total = 0;
  for (std::size_t i = 0; i < pairs.size(); ++i)
    total += log_odds(logits[i], static_cast<std::size_t>(index_of(pairs[i].kind)), clamp);
  return -gamma * total;
}

}  // namespace cref::oracle
