#include "cref/core/ops.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <memory>
#include <string>

#include "cref/core/kernels.hpp"

namespace cref {
namespace kern = kernels::omp;

namespace {

[[noreturn]] void shape_fail(const char* op, const Tensor& a, const Tensor& b) {
  throw ShapeError(std::string(op) + ": incompatible shapes " + shape_string(a.shape()) +
                   " and " + shape_string(b.shape()));
}

void require_same(const char* op, const Tensor& a, const Tensor& b) {
  if (a.shape() != b.shape()) shape_fail(op, a, b);
}

void require_matrix(const char* op, const Tensor& a) {
  if (a.rank() != 2)
    throw ShapeError(std::string(op) + ": expected a matrix, got shape " +
                     shape_string(a.shape()));
}

std::span<const real> parent_value(detail::Node& self, std::size_t i) {
  return self.parents[i]->value;
}

}  // namespace

Tensor add(const Tensor& a, const Tensor& b) {
  require_same("add", a, b);
  std::vector<real> out(a.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a[i] + b[i];
  return Tensor::make_result(a.shape(), std::move(out), {a, b}, [](detail::Node& self) {
    for (std::size_t p = 0; p < 2; ++p)
      if (real* g = self.grad_of(p))
        for (std::size_t i = 0; i < self.grad.size(); ++i) g[i] += self.grad[i];
  });
}

Tensor sub(const Tensor& a, const Tensor& b) {
  require_same("sub", a, b);
  std::vector<real> out(a.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a[i] - b[i];
  return Tensor::make_result(a.shape(), std::move(out), {a, b}, [](detail::Node& self) {
    if (real* g = self.grad_of(0))
      for (std::size_t i = 0; i < self.grad.size(); ++i) g[i] += self.grad[i];
    if (real* g = self.grad_of(1))
      for (std::size_t i = 0; i < self.grad.size(); ++i) g[i] -= self.grad[i];
  });
}

Tensor mul(const Tensor& a, const Tensor& b) {
  require_same("mul", a, b);
  std::vector<real> out(a.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a[i] * b[i];
  return Tensor::make_result(a.shape(), std::move(out), {a, b}, [](detail::Node& self) {
    auto av = parent_value(self, 0);
    auto bv = parent_value(self, 1);
    if (real* g = self.grad_of(0))
      for (std::size_t i = 0; i < self.grad.size(); ++i) g[i] += self.grad[i] * bv[i];
    if (real* g = self.grad_of(1))
      for (std::size_t i = 0; i < self.grad.size(); ++i) g[i] += self.grad[i] * av[i];
  });
}

Tensor div(const Tensor& a, const Tensor& b) {
  require_same("div", a, b);
  std::vector<real> out(a.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a[i] / b[i];
  return Tensor::make_result(a.shape(), std::move(out), {a, b}, [](detail::Node& self) {
    auto av = parent_value(self, 0);
    auto bv = parent_value(self, 1);
    if (real* g = self.grad_of(0))
      for (std::size_t i = 0; i < self.grad.size(); ++i) g[i] += self.grad[i] / bv[i];
    if (real* g = self.grad_of(1))
      for (std::size_t i = 0; i < self.grad.size(); ++i)
        g[i] -= self.grad[i] * av[i] / (bv[i] * bv[i]);
  });
}

Tensor scale(const Tensor& a, real factor) {
  std::vector<real> out(a.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a[i] * factor;
  return Tensor::make_result(a.shape(), std::move(out), {a}, [factor](detail::Node& self) {
    if (real* g = self.grad_of(0))
      for (std::size_t i = 0; i < self.grad.size(); ++i) g[i] += self.grad[i] * factor;
  });
}

Tensor add_row(const Tensor& m, const Tensor& row) {
  if (m.rank() == 0 || row.rank() != 1 || m.cols() != row.size()) shape_fail("add_row", m, row);
  const std::size_t r = m.rows(), c = m.cols();
  std::vector<real> out(m.size());
  for (std::size_t i = 0; i < r; ++i)
    for (std::size_t j = 0; j < c; ++j) out[i * c + j] = m[i * c + j] + row[j];
  return Tensor::make_result(m.shape(), std::move(out), {m, row}, [r, c](detail::Node& self) {
    if (real* g = self.grad_of(0))
      for (std::size_t i = 0; i < r * c; ++i) g[i] += self.grad[i];
    if (real* g = self.grad_of(1))
      for (std::size_t i = 0; i < r; ++i)
        for (std::size_t j = 0; j < c; ++j) g[j] += self.grad[i * c + j];
  });
}

Tensor mul_row(const Tensor& m, const Tensor& row) {
  if (m.rank() == 0 || row.rank() != 1 || m.cols() != row.size()) shape_fail("mul_row", m, row);
  const std::size_t r = m.rows(), c = m.cols();
  std::vector<real> out(m.size());
  for (std::size_t i = 0; i < r; ++i)
    for (std::size_t j = 0; j < c; ++j) out[i * c + j] = m[i * c + j] * row[j];
  return Tensor::make_result(m.shape(), std::move(out), {m, row}, [r, c](detail::Node& self) {
    auto mv = parent_value(self, 0);
    auto rv = parent_value(self, 1);
    if (real* g = self.grad_of(0))
      for (std::size_t i = 0; i < r; ++i)
        for (std::size_t j = 0; j < c; ++j) g[i * c + j] += self.grad[i * c + j] * rv[j];
    if (real* g = self.grad_of(1))
      for (std::size_t i = 0; i < r; ++i)
        for (std::size_t j = 0; j < c; ++j) g[j] += self.grad[i * c + j] * mv[i * c + j];
  });
}

Tensor matmul(const Tensor& a, const Tensor& b) {
  require_matrix("matmul", a);
  require_matrix("matmul", b);
  if (a.cols() != b.rows()) shape_fail("matmul", a, b);
  const std::size_t m = a.rows(), k = a.cols(), n = b.cols();
  std::vector<real> out(m * n);
  kern::gemm_nn(m, k, n, a.values(), b.values(), out);
  return Tensor::make_result({m, n}, std::move(out), {a, b}, [m, k, n](detail::Node& self) {
    if (real* g = self.grad_of(0))
      kern::gemm_nt(m, n, k, self.grad, parent_value(self, 1), {g, m * k}, true);
    if (real* g = self.grad_of(1))
      kern::gemm_tn(k, m, n, parent_value(self, 0), self.grad, {g, k * n}, true);
  });
}

Tensor matmul_nt(const Tensor& a, const Tensor& b) {
  require_matrix("matmul_nt", a);
  require_matrix("matmul_nt", b);
  if (a.cols() != b.cols()) shape_fail("matmul_nt", a, b);
  const std::size_t m = a.rows(), k = a.cols(), n = b.rows();
  std::vector<real> out(m * n);
  kern::gemm_nt(m, k, n, a.values(), b.values(), out);
  return Tensor::make_result({m, n}, std::move(out), {a, b}, [m, k, n](detail::Node& self) {
    if (real* g = self.grad_of(0))
      kern::gemm_nn(m, n, k, self.grad, parent_value(self, 1), {g, m * k}, true);
    if (real* g = self.grad_of(1))
      kern::gemm_tn(n, m, k, self.grad, parent_value(self, 0), {g, n * k}, true);
  });
}

Tensor transpose(const Tensor& a) {
  require_matrix("transpose", a);
  const std::size_t r = a.rows(), c = a.cols();
  std::vector<real> out(a.size());
  for (std::size_t i = 0; i < r; ++i)
    for (std::size_t j = 0; j < c; ++j) out[j * r + i] = a[i * c + j];
  return Tensor::make_result({c, r}, std::move(out), {a}, [r, c](detail::Node& self) {
    if (real* g = self.grad_of(0))
      for (std::size_t i = 0; i < r; ++i)
        for (std::size_t j = 0; j < c; ++j) g[i * c + j] += self.grad[j * r + i];
  });
}

Tensor sum(const Tensor& a) {
  real total = 0;
  for (real v : a.values()) total += v;
  return Tensor::make_result({}, {total}, {a}, [](detail::Node& self) {
    if (real* g = self.grad_of(0))
      for (std::size_t i = 0; i < self.parents[0]->value.size(); ++i) g[i] += self.grad[0];
  });
}

Tensor mean(const Tensor& a) { return scale(sum(a), real(1) / static_cast<real>(a.size())); }

namespace {

Tensor softmax_last(const Tensor& x) {
  const std::size_t r = x.rows(), c = x.cols();
  std::vector<real> out(x.size());
  kern::softmax_rows(r, c, x.values(), out);
  auto y = std::make_shared<std::vector<real>>(out);
  return Tensor::make_result(x.shape(), std::move(out), {x}, [r, c, y](detail::Node& self) {
    real* g = self.grad_of(0);
    if (!g) return;
    for (std::size_t i = 0; i < r; ++i) {
      real dot = 0;
      for (std::size_t j = 0; j < c; ++j) dot += self.grad[i * c + j] * (*y)[i * c + j];
      for (std::size_t j = 0; j < c; ++j)
        g[i * c + j] += (*y)[i * c + j] * (self.grad[i * c + j] - dot);
    }
  });
}

Tensor log_softmax_last(const Tensor& x) {
  const std::size_t r = x.rows(), c = x.cols();
  std::vector<real> out(x.size());
  auto probs = std::make_shared<std::vector<real>>(x.size());
  for (std::size_t i = 0; i < r; ++i) {
    const real* in = x.values().data() + i * c;
    real mx = in[0];
    for (std::size_t j = 1; j < c; ++j) mx = std::max(mx, in[j]);
    real s = 0;
    for (std::size_t j = 0; j < c; ++j) s += std::exp(in[j] - mx);
    const real lse = std::log(s);
    for (std::size_t j = 0; j < c; ++j) {
      out[i * c + j] = (in[j] - mx) - lse;
      (*probs)[i * c + j] = std::exp(out[i * c + j]);
    }
  }
  return Tensor::make_result(x.shape(), std::move(out), {x}, [r, c, probs](detail::Node& self) {
    real* g = self.grad_of(0);
    if (!g) return;
    for (std::size_t i = 0; i < r; ++i) {
      real total = 0;
      for (std::size_t j = 0; j < c; ++j) total += self.grad[i * c + j];
      for (std::size_t j = 0; j < c; ++j)
        g[i * c + j] += self.grad[i * c + j] - (*probs)[i * c + j] * total;
    }
  });
}

int resolve_axis(const char* op, const Tensor& x, int axis) {
  if (x.rank() == 0) throw ShapeError(std::string(op) + ": scalar input");
  const int rank = static_cast<int>(x.rank());
  const int resolved = axis < 0 ? axis + rank : axis;
  if (resolved < 0 || resolved >= rank)
    throw ShapeError(std::string(op) + ": axis " + std::to_string(axis) + " out of range for " +
                     shape_string(x.shape()));
  return resolved;
}

}  // namespace

Tensor softmax(const Tensor& x, int axis) {
  const int a = resolve_axis("softmax", x, axis);
  if (a == static_cast<int>(x.rank()) - 1) return softmax_last(x);
  return transpose(softmax_last(transpose(x)));
}

Tensor log_softmax(const Tensor& x, int axis) {
  const int a = resolve_axis("log_softmax", x, axis);
  if (a == static_cast<int>(x.rank()) - 1) return log_softmax_last(x);
  return transpose(log_softmax_last(transpose(x)));
}

Tensor layer_norm(const Tensor& x, const Tensor& gain, const Tensor& bias, real eps) {
  if (x.rank() == 0 || gain.rank() != 1 || gain.size() != x.cols()) shape_fail("layer_norm", x, gain);
  require_same("layer_norm", gain, bias);
  const std::size_t r = x.rows(), c = x.cols();
  std::vector<real> out(x.size());
  auto stats = std::make_shared<std::vector<real>>(2 * r);
  kern::layer_norm_rows(r, c, x.values(), gain.values(), bias.values(), eps, out,
                        {stats->data(), r}, {stats->data() + r, r});
  return Tensor::make_result(
      x.shape(), std::move(out), {x, gain, bias}, [r, c, stats](detail::Node& self) {
        auto xv = parent_value(self, 0);
        auto gv = parent_value(self, 1);
        real* gx = self.grad_of(0);
        real* gg = self.grad_of(1);
        real* gb = self.grad_of(2);
        std::vector<real> xhat(c), dxhat(c);
        for (std::size_t i = 0; i < r; ++i) {
          const real mu = (*stats)[i], rs = (*stats)[r + i];
          real mean_d = 0, mean_dx = 0;
          for (std::size_t j = 0; j < c; ++j) {
            const real gij = self.grad[i * c + j];
            xhat[j] = (xv[i * c + j] - mu) * rs;
            dxhat[j] = gij * gv[j];
            mean_d += dxhat[j];
            mean_dx += dxhat[j] * xhat[j];
            if (gg) gg[j] += gij * xhat[j];
            if (gb) gb[j] += gij;
          }
          if (!gx) continue;
          mean_d /= static_cast<real>(c);
          mean_dx /= static_cast<real>(c);
          for (std::size_t j = 0; j < c; ++j)
            gx[i * c + j] += rs * (dxhat[j] - mean_d - xhat[j] * mean_dx);
        }
      });
}

Tensor gelu(const Tensor& x) {
  std::vector<real> out(x.size());
  kern::gelu(x.values(), out);
  return Tensor::make_result(x.shape(), std::move(out), {x}, [](detail::Node& self) {
    real* g = self.grad_of(0);
    if (!g) return;
    constexpr real kInvSqrt2 = real(0.70710678118654752440);
    constexpr real kInvSqrt2Pi = real(0.39894228040143267794);
    auto xv = parent_value(self, 0);
    for (std::size_t i = 0; i < xv.size(); ++i) {
      const real cdf = real(0.5) * (real(1) + std::erf(xv[i] * kInvSqrt2));
      const real pdf = kInvSqrt2Pi * std::exp(real(-0.5) * xv[i] * xv[i]);
      g[i] += self.grad[i] * (cdf + xv[i] * pdf);
    }
  });
}

Tensor embedding_lookup(const Tensor& table, std::span<const int> ids) {
  require_matrix("embedding_lookup", table);
  if (ids.empty()) throw ShapeError("embedding_lookup: empty id list");
  const std::size_t vocab = table.rows(), d = table.cols(), n = ids.size();
  std::vector<real> out(n * d);
  for (std::size_t i = 0; i < n; ++i) {
    if (ids[i] < 0 || static_cast<std::size_t>(ids[i]) >= vocab)
      throw std::out_of_range("embedding_lookup: id " + std::to_string(ids[i]) +
                              " outside table of " + std::to_string(vocab) + " rows");
    std::copy_n(table.values().data() + static_cast<std::size_t>(ids[i]) * d, d, out.data() + i * d);
  }
  std::vector<int> idv(ids.begin(), ids.end());
  return Tensor::make_result({n, d}, std::move(out), {table}, [idv, d](detail::Node& self) {
    real* g = self.grad_of(0);
    if (!g) return;
    for (std::size_t i = 0; i < idv.size(); ++i) {
      real* row = g + static_cast<std::size_t>(idv[i]) * d;
      for (std::size_t j = 0; j < d; ++j) row[j] += self.grad[i * d + j];
    }
  });
}

Tensor cross_entropy(const Tensor& logits, std::span<const int> targets) {
  if (logits.rank() == 0 || logits.rows() != targets.size())
    throw ShapeError("cross_entropy: logits " + shape_string(logits.shape()) + " vs " +
                     std::to_string(targets.size()) + " targets");
  const std::size_t n = logits.rows(), c = logits.cols();
  for (int t : targets)
    if (t < 0 || static_cast<std::size_t>(t) >= c)
      throw std::out_of_range("cross_entropy: target " + std::to_string(t) + " out of range");
  auto probs = std::make_shared<std::vector<real>>(logits.size());
  real total = 0;
  for (std::size_t i = 0; i < n; ++i) {
    const real* in = logits.values().data() + i * c;
    real mx = in[0];
    for (std::size_t j = 1; j < c; ++j) mx = std::max(mx, in[j]);
    real s = 0;
    for (std::size_t j = 0; j < c; ++j) s += std::exp(in[j] - mx);
    const real lse = mx + std::log(s);
    for (std::size_t j = 0; j < c; ++j) (*probs)[i * c + j] = std::exp(in[j] - lse);
    total += lse - in[targets[i]];
  }
  std::vector<int> tv(targets.begin(), targets.end());
  return Tensor::make_result(
      {}, {total / static_cast<real>(n)}, {logits}, [n, c, probs, tv](detail::Node& self) {
        real* g = self.grad_of(0);
        if (!g) return;
        const real s = self.grad[0] / static_cast<real>(n);
        for (std::size_t i = 0; i < n; ++i)
          for (std::size_t j = 0; j < c; ++j)
            g[i * c + j] += s * ((*probs)[i * c + j] - (static_cast<int>(j) == tv[i] ? 1 : 0));
      });
}

Tensor cosine_similarity(const Tensor& u, const Tensor& v) {
  if (u.size() != v.size()) shape_fail("cosine_similarity", u, v);
  real dot = 0, uu = 0, vv = 0;
  for (std::size_t i = 0; i < u.size(); ++i) {
    dot += u[i] * v[i];
    uu += u[i] * u[i];
    vv += v[i] * v[i];
  }
  const real nu = std::sqrt(uu), nv = std::sqrt(vv);
  const bool degenerate = nu == 0 || nv == 0;
  const real cosv = degenerate ? real(0) : dot / (nu * nv);
  return Tensor::make_result({}, {cosv}, {u, v}, [=](detail::Node& self) {
    if (degenerate) return;
    auto uv = parent_value(self, 0);
    auto vvv = parent_value(self, 1);
    const real g0 = self.grad[0];
    if (real* g = self.grad_of(0))
      for (std::size_t i = 0; i < uv.size(); ++i)
        g[i] += g0 * (vvv[i] / (nu * nv) - cosv * uv[i] / (nu * nu));
    if (real* g = self.grad_of(1))
      for (std::size_t i = 0; i < uv.size(); ++i)
        g[i] += g0 * (uv[i] / (nu * nv) - cosv * vvv[i] / (nv * nv));
  });
}

Tensor normalize_rows(const Tensor& x) {
  if (x.rank() == 0) throw ShapeError("normalize_rows: scalar input");
  const std::size_t r = x.rows(), c = x.cols();
  std::vector<real> out(x.size());
  auto norms = std::make_shared<std::vector<real>>(r);
  for (std::size_t i = 0; i < r; ++i) {
    real s = 0;
    for (std::size_t j = 0; j < c; ++j) s += x[i * c + j] * x[i * c + j];
    const real nrm = std::sqrt(s);
    (*norms)[i] = nrm;
    for (std::size_t j = 0; j < c; ++j) out[i * c + j] = nrm == 0 ? real(0) : x[i * c + j] / nrm;
  }
  auto y = std::make_shared<std::vector<real>>(out);
  return Tensor::make_result(x.shape(), std::move(out), {x}, [r, c, norms, y](detail::Node& self) {
    real* g = self.grad_of(0);
    if (!g) return;
    for (std::size_t i = 0; i < r; ++i) {
      const real nrm = (*norms)[i];
      if (nrm == 0) continue;
      real dot = 0;
      for (std::size_t j = 0; j < c; ++j) dot += (*y)[i * c + j] * self.grad[i * c + j];
      for (std::size_t j = 0; j < c; ++j)
        g[i * c + j] += (self.grad[i * c + j] - (*y)[i * c + j] * dot) / nrm;
    }
  });
}

Tensor gather_rows(const Tensor& x, std::span<const std::size_t> rows) {
  require_matrix("gather_rows", x);
  if (rows.empty()) throw ShapeError("gather_rows: empty row list");
  const std::size_t c = x.cols();
  std::vector<real> out(rows.size() * c);
  for (std::size_t k = 0; k < rows.size(); ++k) {
    if (rows[k] >= x.rows())
      throw std::out_of_range("gather_rows: row " + std::to_string(rows[k]) + " of " +
                              shape_string(x.shape()));
    std::copy_n(x.values().data() + rows[k] * c, c, out.data() + k * c);
  }
  std::vector<std::size_t> rv(rows.begin(), rows.end());
  return Tensor::make_result({rows.size(), c}, std::move(out), {x}, [rv, c](detail::Node& self) {
    real* g = self.grad_of(0);
    if (!g) return;
    for (std::size_t k = 0; k < rv.size(); ++k)
      for (std::size_t j = 0; j < c; ++j) g[rv[k] * c + j] += self.grad[k * c + j];
  });
}

Tensor pad_rows(const Tensor& x, std::size_t total_rows) {
  require_matrix("pad_rows", x);
  if (total_rows < x.rows())
    throw ShapeError("pad_rows: cannot pad " + shape_string(x.shape()) + " to " +
                     std::to_string(total_rows) + " rows");
  if (total_rows == x.rows()) return x;
  const std::size_t n = x.size();
  std::vector<real> out(total_rows * x.cols(), real(0));
  std::copy(x.values().begin(), x.values().end(), out.begin());
  return Tensor::make_result({total_rows, x.cols()}, std::move(out), {x}, [n](detail::Node& self) {
    if (real* g = self.grad_of(0))
      for (std::size_t i = 0; i < n; ++i) g[i] += self.grad[i];
  });
}

Tensor mean_rows(const Tensor& x) {
  if (x.rank() == 0) throw ShapeError("mean_rows: scalar input");
  const std::size_t r = x.rows(), c = x.cols();
  std::vector<real> out(c, real(0));
  for (std::size_t i = 0; i < r; ++i)
    for (std::size_t j = 0; j < c; ++j) out[j] += x[i * c + j];
  for (real& v : out) v /= static_cast<real>(r);
  return Tensor::make_result({c}, std::move(out), {x}, [r, c](detail::Node& self) {
    real* g = self.grad_of(0);
    if (!g) return;
    for (std::size_t i = 0; i < r; ++i)
      for (std::size_t j = 0; j < c; ++j) g[i * c + j] += self.grad[j] / static_cast<real>(r);
  });
}

Tensor stack_rows(std::span<const Tensor> rows) {
  if (rows.empty()) throw ShapeError("stack_rows: no rows");
  const std::size_t c = rows[0].size();
  std::vector<real> out;
  out.reserve(rows.size() * c);
  for (const Tensor& r : rows) {
    if (r.size() != c) shape_fail("stack_rows", rows[0], r);
    out.insert(out.end(), r.values().begin(), r.values().end());
  }
  const std::size_t n = rows.size();
  return Tensor::make_result({n, c}, std::move(out), std::vector<Tensor>(rows.begin(), rows.end()),
                             [n, c](detail::Node& self) {
                               for (std::size_t k = 0; k < n; ++k)
                                 if (real* g = self.grad_of(k))
                                   for (std::size_t j = 0; j < c; ++j) g[j] += self.grad[k * c + j];
                             });
}

Tensor reshape(const Tensor& x, Shape shape) {
  if (element_count(shape) != x.size())
    throw ShapeError("reshape: cannot view " + shape_string(x.shape()) + " as " +
                     shape_string(shape));
  std::vector<real> out(x.values().begin(), x.values().end());
  return Tensor::make_result(std::move(shape), std::move(out), {x}, [](detail::Node& self) {
    if (real* g = self.grad_of(0))
      for (std::size_t i = 0; i < self.grad.size(); ++i) g[i] += self.grad[i];
  });
}

Tensor windowed_max(const Tensor& s, std::span<const long> pos_a, std::span<const long> pos_b,
                    std::size_t radius, int axis) {
  require_matrix("windowed_max", s);
  if (pos_a.size() != s.rows() || pos_b.size() != s.cols())
    throw ShapeError("windowed_max: positions (" + std::to_string(pos_a.size()) + "," +
                     std::to_string(pos_b.size()) + ") do not match scores " +
                     shape_string(s.shape()));
  if (axis != 0 && axis != 1) throw ShapeError("windowed_max: axis must be 0 or 1");
  const std::size_t na = s.rows(), nb = s.cols();
  const long w = static_cast<long>(radius);
  const std::size_t n_out = axis == 1 ? na : nb;
  const std::size_t n_in = axis == 1 ? nb : na;
  std::vector<real> out(n_out, real(0));
  // Flat index into s of each argmax, or npos when the window is empty.
  constexpr std::size_t npos = std::numeric_limits<std::size_t>::max();
  std::vector<std::size_t> arg(n_out, npos);
  for (std::size_t o = 0; o < n_out; ++o) {
    real best = 0;
    for (std::size_t q = 0; q < n_in; ++q) {
      const std::size_t i = axis == 1 ? o : q;
      const std::size_t j = axis == 1 ? q : o;
      if (std::labs(pos_a[i] - pos_b[j]) > w) continue;
      const real v = s[i * nb + j];
      if (arg[o] == npos || v > best) {
        best = v;
        arg[o] = i * nb + j;
      }
    }
    if (arg[o] != npos) out[o] = best;
  }
  return Tensor::make_result({n_out}, std::move(out), {s}, [arg](detail::Node& self) {
    real* g = self.grad_of(0);
    if (!g) return;
    for (std::size_t o = 0; o < arg.size(); ++o)
      if (arg[o] != npos) g[arg[o]] += self.grad[o];
  });
}

Tensor f1_combine(const Tensor& p, const Tensor& r) {
  if (p.size() != 1 || r.size() != 1) shape_fail("f1_combine", p, r);
  const real pv = p.item(), rv = r.item();
  const bool active = pv * rv > 0;
  const real s = pv + rv;
  const real f = active ? real(2) * pv * rv / s : real(0);
  return Tensor::make_result({}, {f}, {p, r}, [=](detail::Node& self) {
    if (!active) return;
    const real g0 = self.grad[0];
    if (real* g = self.grad_of(0)) g[0] += g0 * real(2) * rv * rv / (s * s);
    if (real* g = self.grad_of(1)) g[0] += g0 * real(2) * pv * pv / (s * s);
  });
}

Tensor dropout(const Tensor& x, real rate, Rng& rng) {
  if (rate < 0 || rate >= 1) throw std::invalid_argument("dropout rate must be in [0,1)");
  if (rate == 0) return x;
  const real keep = real(1) - rate;
  auto mask = std::make_shared<std::vector<real>>(x.size());
  std::vector<real> out(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) {
    (*mask)[i] = rng.bernoulli(keep) ? real(1) / keep : real(0);
    out[i] = x[i] * (*mask)[i];
  }
  return Tensor::make_result(x.shape(), std::move(out), {x}, [mask](detail::Node& self) {
    if (real* g = self.grad_of(0))
      for (std::size_t i = 0; i < self.grad.size(); ++i) g[i] += self.grad[i] * (*mask)[i];
  });
}

Tensor attention(const Tensor& q, const Tensor& k, const Tensor& v, std::size_t heads) {
  require_matrix("attention", q);
  require_same("attention", q, k);
  require_same("attention", q, v);
  const std::size_t len = q.rows(), dim = q.cols();
  if (heads == 0 || dim % heads != 0)
    throw ShapeError("attention: model dim " + std::to_string(dim) + " not divisible by " +
                     std::to_string(heads) + " heads");
  std::vector<real> out(len * dim);
  auto probs = std::make_shared<std::vector<real>>(heads * len * len);
  kern::attention_forward(len, dim, heads, q.values(), k.values(), v.values(), out, *probs);
  return Tensor::make_result(
      q.shape(), std::move(out), {q, k, v}, [len, dim, heads, probs](detail::Node& self) {
        // Parents that do not want gradient still need somewhere to write.
        std::vector<real> dq_s(len * dim), dk_s(len * dim), dv_s(len * dim);
        real* gq = self.grad_of(0);
        real* gk = self.grad_of(1);
        real* gv = self.grad_of(2);
        kern::attention_backward(len, dim, heads, parent_value(self, 0), parent_value(self, 1),
                                 parent_value(self, 2), *probs, self.grad,
                                 gq ? std::span<real>(gq, len * dim) : std::span<real>(dq_s),
                                 gk ? std::span<real>(gk, len * dim) : std::span<real>(dk_s),
                                 gv ? std::span<real>(gv, len * dim) : std::span<real>(dv_s));
      });
}

Tensor batch_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta, real eps,
                  BatchStats* stats) {
  require_matrix("batch_norm", x);
  if (gamma.rank() != 1 || gamma.size() != x.cols()) shape_fail("batch_norm", x, gamma);
  require_same("batch_norm", gamma, beta);
  const std::size_t b = x.rows(), f = x.cols();
  std::vector<real> mu(f, real(0)), var(f, real(0));
  for (std::size_t i = 0; i < b; ++i)
    for (std::size_t j = 0; j < f; ++j) mu[j] += x[i * f + j];
  for (real& m : mu) m /= static_cast<real>(b);
  for (std::size_t i = 0; i < b; ++i)
    for (std::size_t j = 0; j < f; ++j) var[j] += (x[i * f + j] - mu[j]) * (x[i * f + j] - mu[j]);
  for (real& v : var) v /= static_cast<real>(b);
  auto rstd = std::make_shared<std::vector<real>>(f);
  auto xhat = std::make_shared<std::vector<real>>(x.size());
  std::vector<real> out(x.size());
  for (std::size_t j = 0; j < f; ++j) (*rstd)[j] = real(1) / std::sqrt(var[j] + eps);
  for (std::size_t i = 0; i < b; ++i)
    for (std::size_t j = 0; j < f; ++j) {
      (*xhat)[i * f + j] = (x[i * f + j] - mu[j]) * (*rstd)[j];
      out[i * f + j] = (*xhat)[i * f + j] * gamma[j] + beta[j];
    }
  if (stats) *stats = BatchStats{mu, var};
  return Tensor::make_result(
      x.shape(), std::move(out), {x, gamma, beta}, [b, f, rstd, xhat](detail::Node& self) {
        auto gammav = parent_value(self, 1);
        real* gx = self.grad_of(0);
        real* gg = self.grad_of(1);
        real* gb = self.grad_of(2);
        for (std::size_t j = 0; j < f; ++j) {
          real sum_d = 0, sum_dx = 0;
          for (std::size_t i = 0; i < b; ++i) {
            const real gij = self.grad[i * f + j];
            const real d = gij * gammav[j];
            sum_d += d;
            sum_dx += d * (*xhat)[i * f + j];
            if (gg) gg[j] += gij * (*xhat)[i * f + j];
            if (gb) gb[j] += gij;
          }
          if (!gx) continue;
          const real nb = static_cast<real>(b);
          for (std::size_t i = 0; i < b; ++i) {
            const real d = self.grad[i * f + j] * gammav[j];
            gx[i * f + j] += (*rstd)[j] / nb * (nb * d - sum_d - (*xhat)[i * f + j] * sum_dx);
          }
        }
      });
}

Tensor prelu(const Tensor& x, const Tensor& slope) {
  if (slope.size() != 1) shape_fail("prelu", x, slope);
  const real a = slope[0];
  std::vector<real> out(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) out[i] = x[i] > 0 ? x[i] : a * x[i];
  return Tensor::make_result(x.shape(), std::move(out), {x, slope}, [a](detail::Node& self) {
    auto xv = parent_value(self, 0);
    real* gx = self.grad_of(0);
    real* ga = self.grad_of(1);
    for (std::size_t i = 0; i < xv.size(); ++i) {
      const real g = self.grad[i];
      if (xv[i] > 0) {
        if (gx) gx[i] += g;
      } else {
        if (gx) gx[i] += a * g;
        if (ga) ga[0] += g * xv[i];
      }
    }
  });
}

Tensor log_odds_against_rest(const Tensor& logits, std::span<const int> targets, real clamp) {
  require_matrix("log_odds_against_rest", logits);
  const std::size_t n = logits.rows(), c = logits.cols();
  if (targets.size() != n)
    throw ShapeError("log_odds_against_rest: " + std::to_string(targets.size()) +
                     " targets for logits " + shape_string(logits.shape()));
  if (c < 2) throw ShapeError("log_odds_against_rest: needs at least two classes");
  if (!(clamp > 0)) throw std::invalid_argument("log_odds_against_rest: clamp must be positive");
  const real log_clamp = std::log(clamp);
  // Per row: softmax p, softmax over the non-target classes, and which side
  // of the ratio is clamped.
  auto probs = std::make_shared<std::vector<real>>(n * c);
  auto rest = std::make_shared<std::vector<real>>(n * c);
  auto live = std::make_shared<std::vector<std::pair<bool, bool>>>(n);
  std::vector<real> out(n);
  std::vector<int> tv(targets.begin(), targets.end());
  for (std::size_t i = 0; i < n; ++i) {
    const real* in = logits.values().data() + i * c;
    const int t = targets[i];
    if (t < 0 || static_cast<std::size_t>(t) >= c)
      throw std::out_of_range("log_odds_against_rest: target " + std::to_string(t));
    real mx = in[0];
    for (std::size_t j = 1; j < c; ++j) mx = std::max(mx, in[j]);
    real s = 0;
    for (std::size_t j = 0; j < c; ++j) s += std::exp(in[j] - mx);
    const real lse = mx + std::log(s);
    real mr = -std::numeric_limits<real>::infinity();
    for (std::size_t j = 0; j < c; ++j)
      if (static_cast<int>(j) != t) mr = std::max(mr, in[j]);
    real sr = 0;
    for (std::size_t j = 0; j < c; ++j)
      if (static_cast<int>(j) != t) sr += std::exp(in[j] - mr);
    const real lse_rest = mr + std::log(sr);
    for (std::size_t j = 0; j < c; ++j) {
      (*probs)[i * c + j] = std::exp(in[j] - lse);
      (*rest)[i * c + j] = static_cast<int>(j) == t ? real(0) : std::exp(in[j] - lse_rest);
    }
    const real log_q = in[t] - lse;
    const real log_d = lse_rest - lse;
    const bool q_live = log_q > log_clamp;
    const bool d_live = log_d > log_clamp;
    (*live)[i] = {q_live, d_live};
    out[i] = (q_live ? log_q : log_clamp) - (d_live ? log_d : log_clamp);
  }
  return Tensor::make_result(
      {n}, std::move(out), {logits}, [n, c, probs, rest, live, tv](detail::Node& self) {
        real* g = self.grad_of(0);
        if (!g) return;
        for (std::size_t i = 0; i < n; ++i) {
          const auto [q_live, d_live] = (*live)[i];
          const real gi = self.grad[i];
          for (std::size_t j = 0; j < c; ++j) {
            const real p = (*probs)[i * c + j];
            real d = 0;
            if (q_live) d += (static_cast<int>(j) == tv[i] ? real(1) : real(0)) - p;
            if (d_live) d -= (*rest)[i * c + j] - p;
            g[i * c + j] += gi * d;
          }
        }
      });
}

Tensor stop_gradient(const Tensor& x) { return x.detach(); }

}  // namespace cref
