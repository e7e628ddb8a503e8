#pragma once

// Numeric kernels used by the autograd ops.
//
// Two implementations share one interface:
//   mgp::kernels::serial  straightforward loops, kept as the reference
//   mgp::kernels::omp     cache-blocked / OpenMP-parallel versions used in production
//
// Work is only ever partitioned over output elements, never over a reduction
// axis, so the omp kernels produce bit-identical results for any thread count.
// All *_backward kernels accumulate into their gradient outputs.

#include <cstddef>
#include <span>

namespace mgp::kernels {

enum class Trans { kNo, kYes };

// Row-major storage view: element (i, j) lives at data[i * ld + j].
template <typename T>
struct MatrixRef {
  T* data;
  std::size_t rows;
  std::size_t cols;
  std::size_t ld;
};

template <typename Real>
using ConstMatrixRef = MatrixRef<const Real>;

#define MGP_KERNEL_DECLS                                                                        \
  /* c = alpha * op(a) * op(b) + beta * c. beta == 0 ignores the prior contents of c. */        \
  template <typename Real>                                                                      \
  void gemm(Trans ta, ConstMatrixRef<Real> a, Trans tb, ConstMatrixRef<Real> b,                 \
            MatrixRef<Real> c, Real alpha, Real beta);                                          \
                                                                                                \
  /* Softmax over the middle axis of a [outer, n, inner] layout. */                             \
  template <typename Real>                                                                      \
  void softmax(std::span<const Real> x, std::span<Real> y, std::size_t outer, std::size_t n,   \
               std::size_t inner);                                                              \
  template <typename Real>                                                                      \
  void softmax_backward(std::span<const Real> y, std::span<const Real> dy, std::span<Real> dx, \
                        std::size_t outer, std::size_t n, std::size_t inner);                   \
                                                                                                \
  /* Row-wise layer norm over the last axis of width d. mean/rstd get one value per row. */     \
  template <typename Real>                                                                      \
  void layer_norm(std::span<const Real> x, std::span<const Real> gamma,                         \
                  std::span<const Real> beta, std::span<Real> y, std::span<Real> mean,          \
                  std::span<Real> rstd, std::size_t d, Real eps);                               \
  template <typename Real>                                                                      \
  void layer_norm_backward(std::span<const Real> x, std::span<const Real> gamma,                \
                           std::span<const Real> mean, std::span<const Real> rstd,              \
                           std::span<const Real> dy, std::span<Real> dx,                        \
                           std::span<Real> dgamma, std::span<Real> dbeta, std::size_t d);       \
                                                                                                \
  /* Exact GELU, x * Phi(x). */                                                                 \
  template <typename Real>                                                                      \
  void gelu(std::span<const Real> x, std::span<Real> y);                                        \
  template <typename Real>                                                                      \
  void gelu_backward(std::span<const Real> x, std::span<const Real> dy, std::span<Real> dx);

namespace serial {
MGP_KERNEL_DECLS
}  // namespace serial

namespace omp {
MGP_KERNEL_DECLS
}  // namespace omp

#undef MGP_KERNEL_DECLS

}  // namespace mgp::kernels
