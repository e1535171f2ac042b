#include <omp.h>

#include <algorithm>
#include <cmath>
#include <vector>

#include "cref/core/kernels.hpp"

namespace cref::kernels {

int max_threads() { return omp_get_max_threads(); }

namespace omp {
namespace {

// Below this many multiply-adds the fork/join overhead dominates.
constexpr std::size_t kParallelWork = 1u << 15;

}  // namespace

void gemm_nn(std::size_t m, std::size_t k, std::size_t n, std::span<const real> a,
             std::span<const real> b, std::span<real> c, bool accumulate) {
  const auto rows = static_cast<std::ptrdiff_t>(m);
#pragma omp parallel for schedule(static) if (m * n * k > kParallelWork)
  for (std::ptrdiff_t ii = 0; ii < rows; ++ii) {
    const auto i = static_cast<std::size_t>(ii);
    real* crow = c.data() + i * n;
    if (!accumulate) std::fill(crow, crow + n, real(0));
    const real* arow = a.data() + i * k;
    for (std::size_t p = 0; p < k; ++p) {
      const real av = arow[p];
      const real* brow = b.data() + p * n;
      for (std::size_t j = 0; j < n; ++j) crow[j] += av * brow[j];
    }
  }
}

void gemm_nt(std::size_t m, std::size_t k, std::size_t n, std::span<const real> a,
             std::span<const real> b, std::span<real> c, bool accumulate) {
  const auto rows = static_cast<std::ptrdiff_t>(m);
#pragma omp parallel for schedule(static) if (m * n * k > kParallelWork)
  for (std::ptrdiff_t ii = 0; ii < rows; ++ii) {
    const auto i = static_cast<std::size_t>(ii);
    const real* arow = a.data() + i * k;
    for (std::size_t j = 0; j < n; ++j) {
      const real* brow = b.data() + j * k;
      real sum = accumulate ? c[i * n + j] : real(0);
      for (std::size_t p = 0; p < k; ++p) sum += arow[p] * brow[p];
      c[i * n + j] = sum;
    }
  }
}

void gemm_tn(std::size_t m, std::size_t k, std::size_t n, std::span<const real> a,
             std::span<const real> b, std::span<real> c, bool accumulate) {
  const auto rows = static_cast<std::ptrdiff_t>(m);
#pragma omp parallel for schedule(static) if (m * n * k > kParallelWork)
  for (std::ptrdiff_t ii = 0; ii < rows; ++ii) {
    const auto i = static_cast<std::size_t>(ii);
    real* crow = c.data() + i * n;
    if (!accumulate) std::fill(crow, crow + n, real(0));
    for (std::size_t p = 0; p < k; ++p) {
      const real av = a[p * m + i];
      const real* brow = b.data() + p * n;
      for (std::size_t j = 0; j < n; ++j) crow[j] += av * brow[j];
    }
  }
}

void softmax_rows(std::size_t rows, std::size_t cols, std::span<const real> x,
                  std::span<real> out) {
  const auto nrows = static_cast<std::ptrdiff_t>(rows);
#pragma omp parallel for schedule(static) if (rows * cols > kParallelWork)
  for (std::ptrdiff_t rr = 0; rr < nrows; ++rr) {
    const auto r = static_cast<std::size_t>(rr);
    const real* in = x.data() + r * cols;
    real* o = out.data() + r * cols;
    real mx = in[0];
    for (std::size_t c = 1; c < cols; ++c) mx = std::max(mx, in[c]);
    real sum = 0;
    for (std::size_t c = 0; c < cols; ++c) {
      o[c] = std::exp(in[c] - mx);
      sum += o[c];
    }
    for (std::size_t c = 0; c < cols; ++c) o[c] /= sum;
  }
}

void layer_norm_rows(std::size_t rows, std::size_t cols, std::span<const real> x,
                     std::span<const real> gain, std::span<const real> bias, real eps,
                     std::span<real> out, std::span<real> mean, std::span<real> rstd) {
  const auto nrows = static_cast<std::ptrdiff_t>(rows);
#pragma omp parallel for schedule(static) if (rows * cols > kParallelWork)
  for (std::ptrdiff_t rr = 0; rr < nrows; ++rr) {
    const auto r = static_cast<std::size_t>(rr);
    const real* in = x.data() + r * cols;
    real* o = out.data() + r * cols;
    real mu = 0;
    for (std::size_t c = 0; c < cols; ++c) mu += in[c];
    mu /= static_cast<real>(cols);
    real var = 0;
    for (std::size_t c = 0; c < cols; ++c) var += (in[c] - mu) * (in[c] - mu);
    var /= static_cast<real>(cols);
    const real rs = real(1) / std::sqrt(var + eps);
    for (std::size_t c = 0; c < cols; ++c) o[c] = (in[c] - mu) * rs * gain[c] + bias[c];
    mean[r] = mu;
    rstd[r] = rs;
  }
}

void gelu(std::span<const real> x, std::span<real> out) {
  constexpr real kInvSqrt2 = real(0.70710678118654752440);
  const auto n = static_cast<std::ptrdiff_t>(x.size());
#pragma omp parallel for schedule(static) if (x.size() > kParallelWork)
  for (std::ptrdiff_t i = 0; i < n; ++i)
    out[i] = real(0.5) * x[i] * (real(1) + std::erf(x[i] * kInvSqrt2));
}

void attention_forward(std::size_t len, std::size_t dim, std::size_t heads,
                       std::span<const real> q, std::span<const real> k,
                       std::span<const real> v, std::span<real> out, std::span<real> probs) {
  const std::size_t hd = dim / heads;
  const real scale = real(1) / std::sqrt(static_cast<real>(hd));
  const auto nheads = static_cast<std::ptrdiff_t>(heads);
#pragma omp parallel for schedule(static) if (len * len * dim > kParallelWork)
  for (std::ptrdiff_t hh = 0; hh < nheads; ++hh) {
    const auto h = static_cast<std::size_t>(hh);
    const std::size_t off = h * hd;
    real* p = probs.data() + h * len * len;
    for (std::size_t i = 0; i < len; ++i) {
      real* prow = p + i * len;
      const real* qrow = q.data() + i * dim + off;
      real mx = 0;
      for (std::size_t j = 0; j < len; ++j) {
        const real* krow = k.data() + j * dim + off;
        real s = 0;
        for (std::size_t c = 0; c < hd; ++c) s += qrow[c] * krow[c];
        prow[j] = s * scale;
        mx = (j == 0) ? prow[j] : std::max(mx, prow[j]);
      }
      real sum = 0;
      for (std::size_t j = 0; j < len; ++j) {
        prow[j] = std::exp(prow[j] - mx);
        sum += prow[j];
      }
      for (std::size_t j = 0; j < len; ++j) prow[j] /= sum;
      for (std::size_t c = 0; c < hd; ++c) {
        real acc = 0;
        for (std::size_t j = 0; j < len; ++j) acc += prow[j] * v[j * dim + off + c];
        out[i * dim + off + c] = acc;
      }
    }
  }
}

void attention_backward(std::size_t len, std::size_t dim, std::size_t heads,
                        std::span<const real> q, std::span<const real> k,
                        std::span<const real> v, std::span<const real> probs,
                        std::span<const real> dout, std::span<real> dq, std::span<real> dk,
                        std::span<real> dv) {
  const std::size_t hd = dim / heads;
  const real scale = real(1) / std::sqrt(static_cast<real>(hd));
  const auto nheads = static_cast<std::ptrdiff_t>(heads);
#pragma omp parallel for schedule(static) if (len * len * dim > kParallelWork)
  for (std::ptrdiff_t hh = 0; hh < nheads; ++hh) {
    const auto h = static_cast<std::size_t>(hh);
    const std::size_t off = h * hd;
    const real* p = probs.data() + h * len * len;
    std::vector<real> ds(len * len);
    for (std::size_t i = 0; i < len; ++i) {
      const real* grow = dout.data() + i * dim + off;
      real dot = 0;
      for (std::size_t j = 0; j < len; ++j) {
        const real* vrow = v.data() + j * dim + off;
        real dp = 0;
        for (std::size_t c = 0; c < hd; ++c) dp += grow[c] * vrow[c];
        ds[i * len + j] = dp;
        dot += dp * p[i * len + j];
      }
      for (std::size_t j = 0; j < len; ++j)
        ds[i * len + j] = p[i * len + j] * (ds[i * len + j] - dot) * scale;
    }
    for (std::size_t j = 0; j < len; ++j) {
      for (std::size_t c = 0; c < hd; ++c) {
        real accv = dv[j * dim + off + c];
        real acck = dk[j * dim + off + c];
        for (std::size_t i = 0; i < len; ++i) {
          accv += p[i * len + j] * dout[i * dim + off + c];
          acck += ds[i * len + j] * q[i * dim + off + c];
        }
        dv[j * dim + off + c] = accv;
        dk[j * dim + off + c] = acck;
      }
    }
    for (std::size_t i = 0; i < len; ++i) {
      for (std::size_t c = 0; c < hd; ++c) {
        real acc = dq[i * dim + off + c];
        for (std::size_t j = 0; j < len; ++j) acc += ds[i * len + j] * k[j * dim + off + c];
        dq[i * dim + off + c] = acc;
      }
    }
  }
}

}  // namespace omp
}  // namespace cref::kernels
