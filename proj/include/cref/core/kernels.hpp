#pragma once

// Dense inner loops behind the tensor ops. Each kernel has a serial reference
// version and an OpenMP version that must agree bit for bit: the parallel
// versions only split independent output rows (or heads) across threads and
// keep the reference's per-element accumulation order.

#include <cstddef>
#include <span>

#include "cref/core/real.hpp"

namespace cref::kernels {

namespace reference {

// c (m x n) {=,+=} a (m x k) * b (k x n)
void gemm_nn(std::size_t m, std::size_t k, std::size_t n, std::span<const real> a,
             std::span<const real> b, std::span<real> c, bool accumulate = false);
// c (m x n) {=,+=} a * b^T with b (n x k)
void gemm_nt(std::size_t m, std::size_t k, std::size_t n, std::span<const real> a,
             std::span<const real> b, std::span<real> c, bool accumulate = false);
// c (m x n) {=,+=} a^T * b with a (k x m), b (k x n)
void gemm_tn(std::size_t m, std::size_t k, std::size_t n, std::span<const real> a,
             std::span<const real> b, std::span<real> c, bool accumulate = false);
void softmax_rows(std::size_t rows, std::size_t cols, std::span<const real> x,
                  std::span<real> out);
void layer_norm_rows(std::size_t rows, std::size_t cols, std::span<const real> x,
                     std::span<const real> gain, std::span<const real> bias, real eps,
                     std::span<real> out, std::span<real> mean, std::span<real> rstd);
void gelu(std::span<const real> x, std::span<real> out);
// q, k, v, out are (len x dim); probs receives (heads x len x len).
void attention_forward(std::size_t len, std::size_t dim, std::size_t heads,
                       std::span<const real> q, std::span<const real> k,
                       std::span<const real> v, std::span<real> out, std::span<real> probs);
// Accumulates into dq, dk, dv.
void attention_backward(std::size_t len, std::size_t dim, std::size_t heads,
                        std::span<const real> q, std::span<const real> k,
                        std::span<const real> v, std::span<const real> probs,
                        std::span<const real> dout, std::span<real> dq, std::span<real> dk,
                        std::span<real> dv);

}  // namespace reference

namespace omp {

// c (m x n) {=,+=} a (m x k) * b (k x n)
void gemm_nn(std::size_t m, std::size_t k, std::size_t n, std::span<const real> a,
             std::span<const real> b, std::span<real> c, bool accumulate = false);
// c (m x n) {=,+=} a * b^T with b (n x k)
void gemm_nt(std::size_t m, std::size_t k, std::size_t n, std::span<const real> a,
             std::span<const real> b, std::span<real> c, bool accumulate = false);
// c (m x n) {=,+=} a^T * b with a (k x m), b (k x n)
void gemm_tn(std::size_t m, std::size_t k, std::size_t n, std::span<const real> a,
             std::span<const real> b, std::span<real> c, bool accumulate = false);
void softmax_rows(std::size_t rows, std::size_t cols, std::span<const real> x,
                  std::span<real> out);
void layer_norm_rows(std::size_t rows, std::size_t cols, std::span<const real> x,
                     std::span<const real> gain, std::span<const real> bias, real eps,
                     std::span<real> out, std::span<real> mean, std::span<real> rstd);
void gelu(std::span<const real> x, std::span<real> out);
// q, k, v, out are (len x dim); probs receives (heads x len x len).
void attention_forward(std::size_t len, std::size_t dim, std::size_t heads,
                       std::span<const real> q, std::span<const real> k,
                       std::span<const real> v, std::span<real> out, std::span<real> probs);
// Accumulates into dq, dk, dv.
void attention_backward(std::size_t len, std::size_t dim, std::size_t heads,
                        std::span<const real> q, std::span<const real> k,
                        std::span<const real> v, std::span<const real> probs,
                        std::span<const real> dout, std::span<real> dq, std::span<real> dk,
                        std::span<real> dv);

}  // namespace omp

// Threads available to the OpenMP kernels.
int max_threads();

}  // namespace cref::kernels
