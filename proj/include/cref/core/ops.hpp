#pragma once

// Differentiable tensor ops. Shape mismatches throw ShapeError naming both
// operand shapes. Vectors are rank-1, matrices rank-2, scalars rank-0.

#include <cstddef>
#include <span>
#include <vector>

#include "cref/core/rng.hpp"
#include "cref/core/tensor.hpp"

namespace cref {

// Elementwise, identical shapes.
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor div(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& a, real factor);

// Row-broadcast: m is (r x c), row has c elements.
Tensor add_row(const Tensor& m, const Tensor& row);
Tensor mul_row(const Tensor& m, const Tensor& row);

Tensor matmul(const Tensor& a, const Tensor& b);
// a * b^T
Tensor matmul_nt(const Tensor& a, const Tensor& b);
Tensor transpose(const Tensor& a);

Tensor sum(const Tensor& a);
Tensor mean(const Tensor& a);

// axis = -1 means the last axis.
Tensor softmax(const Tensor& x, int axis = -1);
Tensor log_softmax(const Tensor& x, int axis = -1);
// Normalizes each row of x, then applies per-column gain and bias.
Tensor layer_norm(const Tensor& x, const Tensor& gain, const Tensor& bias, real eps = 1e-5);
// Exact (erf) GELU.
Tensor gelu(const Tensor& x);

Tensor embedding_lookup(const Tensor& table, std::span<const int> ids);
// Mean negative log-likelihood of `targets` under row-wise softmax(logits).
Tensor cross_entropy(const Tensor& logits, std::span<const int> targets);
// Zero-norm inputs give similarity 0 with zero gradient.
Tensor cosine_similarity(const Tensor& u, const Tensor& v);
// Unit-normalizes each row; zero rows stay zero.
Tensor normalize_rows(const Tensor& x);

Tensor gather_rows(const Tensor& x, std::span<const std::size_t> rows);
// Appends zero rows up to `total_rows`.
Tensor pad_rows(const Tensor& x, std::size_t total_rows);
// (r x c) -> (c): mean over rows.
Tensor mean_rows(const Tensor& x);
// n vectors of length c -> (n x c).
Tensor stack_rows(std::span<const Tensor> rows);
Tensor reshape(const Tensor& x, Shape shape);

// For a score matrix s (na x nb) with row positions pos_a and column
// positions pos_b: axis 1 -> vector (na) of max_j s[i][j] over
// |pos_a[i] - pos_b[j]| <= radius; axis 0 -> vector (nb) of the column-wise
// analogue. An empty window yields 0. Gradient flows to the first argmax.
Tensor windowed_max(const Tensor& s, std::span<const long> pos_a, std::span<const long> pos_b,
                    std::size_t radius, int axis);
// Harmonic mean 2pr/(p+r) of two scalars when p*r > 0, else 0.
Tensor f1_combine(const Tensor& p, const Tensor& r);

Tensor dropout(const Tensor& x, real rate, Rng& rng);

// Fused multi-head scaled dot-product self attention over (len x dim) q,k,v.
Tensor attention(const Tensor& q, const Tensor& k, const Tensor& v, std::size_t heads);

struct BatchStats {
  std::vector<real> mean;
  std::vector<real> var;  // biased
};
// Batch normalization over the rows of x (batch x features) using batch
// statistics; per-feature gamma/beta. Fills `stats` when non-null.
Tensor batch_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta, real eps,
                  BatchStats* stats = nullptr);
// max(0,x) + slope * min(0,x) with a learnable scalar slope.
Tensor prelu(const Tensor& x, const Tensor& slope);

// Row-wise log[q(k) / sum_{t != k} q(t)] with q = softmax(logits row) and k
// the row's target. Both probabilities are clamped below at `clamp`.
Tensor log_odds_against_rest(const Tensor& logits, std::span<const int> targets, real clamp);

// Stop-gradient: same values, no tape.
Tensor stop_gradient(const Tensor& x);

}  // namespace cref
