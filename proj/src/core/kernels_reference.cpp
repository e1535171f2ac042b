#include <algorithm>
#include <cmath>
#include <vector>

#include "cref/core/kernels.hpp"

namespace cref::kernels::reference {

void gemm_nn(std::size_t m, std::size_t k, std::size_t n, std::span<const real> a,
             std::span<const real> b, std::span<real> c, bool accumulate) {
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      real sum = accumulate ? c[i * n + j] : real(0);
      for (std::size_t p = 0; p < k; ++p) sum += a[i * k + p] * b[p * n + j];
      c[i * n + j] = sum;
    }
  }
}

void gemm_nt(std::size_t m, std::size_t k, std::size_t n, std::span<const real> a,
             std::span<const real> b, std::span<real> c, bool accumulate) {
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      real sum = accumulate ? c[i * n + j] : real(0);
      for (std::size_t p = 0; p < k; ++p) sum += a[i * k + p] * b[j * k + p];
      c[i * n + j] = sum;
    }
  }
}

void gemm_tn(std::size_t m, std::size_t k, std::size_t n, std::span<const real> a,
             std::span<const real> b, std::span<real> c, bool accumulate) {
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      real sum = accumulate ? c[i * n + j] : real(0);
      for (std::size_t p = 0; p < k; ++p) sum += a[p * m + i] * b[p * n + j];
      c[i * n + j] = sum;
    }
  }
}

void softmax_rows(std::size_t rows, std::size_t cols, std::span<const real> x,
                  std::span<real> out) {
  for (std::size_t r = 0; r < rows; ++r) {
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
  for (std::size_t r = 0; r < rows; ++r) {
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
  for (std::size_t i = 0; i < x.size(); ++i)
    out[i] = real(0.5) * x[i] * (real(1) + std::erf(x[i] * kInvSqrt2));
}

void attention_forward(std::size_t len, std::size_t dim, std::size_t heads,
                       std::span<const real> q, std::span<const real> k,
                       std::span<const real> v, std::span<real> out, std::span<real> probs) {
  const std::size_t hd = dim / heads;
  const real scale = real(1) / std::sqrt(static_cast<real>(hd));
  for (std::size_t h = 0; h < heads; ++h) {
    const std::size_t off = h * hd;
    real* p = probs.data() + h * len * len;
    for (std::size_t i = 0; i < len; ++i) {
      real* prow = p + i * len;
      real mx = 0;
      for (std::size_t j = 0; j < len; ++j) {
        real s = 0;
        for (std::size_t c = 0; c < hd; ++c) s += q[i * dim + off + c] * k[j * dim + off + c];
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
  std::vector<real> ds(len * len);
  for (std::size_t h = 0; h < heads; ++h) {
    const std::size_t off = h * hd;
    const real* p = probs.data() + h * len * len;
    for (std::size_t i = 0; i < len; ++i) {
      real dot = 0;
      for (std::size_t j = 0; j < len; ++j) {
        real dp = 0;
        for (std::size_t c = 0; c < hd; ++c) dp += dout[i * dim + off + c] * v[j * dim + off + c];
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

}  // namespace cref::kernels::reference
