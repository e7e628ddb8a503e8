#include <algorithm>
#include <cmath>
#include <string>

#include "mgp/errors.hpp"
#include "mgp/kernels.hpp"

namespace mgp::kernels::serial {

namespace {

template <typename Real>
Real element(ConstMatrixRef<Real> m, Trans t, std::size_t i, std::size_t j) {
  return t == Trans::kNo ? m.data[i * m.ld + j] : m.data[j * m.ld + i];
}

}  // namespace

template <typename Real>
void gemm(Trans ta, ConstMatrixRef<Real> a, Trans tb, ConstMatrixRef<Real> b, MatrixRef<Real> c,
          Real alpha, Real beta) {
  const std::size_t m = ta == Trans::kNo ? a.rows : a.cols;
  const std::size_t k = ta == Trans::kNo ? a.cols : a.rows;
  const std::size_t kb = tb == Trans::kNo ? b.rows : b.cols;
  const std::size_t n = tb == Trans::kNo ? b.cols : b.rows;
  if (k != kb || c.rows != m || c.cols != n) {
    throw DimensionError("gemm: inner extents " + std::to_string(k) + " vs " + std::to_string(kb));
  }
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      Real acc = 0;
      for (std::size_t p = 0; p < k; ++p) {
        acc += element(a, ta, i, p) * element(b, tb, p, j);
      }
      Real& out = c.data[i * c.ld + j];
      out = beta == Real{0} ? alpha * acc : alpha * acc + beta * out;
    }
  }
}

template <typename Real>
void softmax(std::span<const Real> x, std::span<Real> y, std::size_t outer, std::size_t n,
             std::size_t inner) {
  for (std::size_t o = 0; o < outer; ++o) {
    for (std::size_t s = 0; s < inner; ++s) {
      const std::size_t base = o * n * inner + s;
      Real mx = x[base];
      for (std::size_t i = 1; i < n; ++i) mx = std::max(mx, x[base + i * inner]);
      Real sum = 0;
      for (std::size_t i = 0; i < n; ++i) {
        const Real e = std::exp(x[base + i * inner] - mx);
        y[base + i * inner] = e;
        sum += e;
      }
      for (std::size_t i = 0; i < n; ++i) y[base + i * inner] /= sum;
    }
  }
}

template <typename Real>
void softmax_backward(std::span<const Real> y, std::span<const Real> dy, std::span<Real> dx,
                      std::size_t outer, std::size_t n, std::size_t inner) {
  for (std::size_t o = 0; o < outer; ++o) {
    for (std::size_t s = 0; s < inner; ++s) {
      const std::size_t base = o * n * inner + s;
      Real dot = 0;
      for (std::size_t i = 0; i < n; ++i) dot += y[base + i * inner] * dy[base + i * inner];
      for (std::size_t i = 0; i < n; ++i) {
        const std::size_t at = base + i * inner;
        dx[at] += y[at] * (dy[at] - dot);
      }
    }
  }
}

template <typename Real>
void layer_norm(std::span<const Real> x, std::span<const Real> gamma, std::span<const Real> beta,
                std::span<Real> y, std::span<Real> mean, std::span<Real> rstd, std::size_t d,
                Real eps) {
  const std::size_t rows = x.size() / d;
  for (std::size_t r = 0; r < rows; ++r) {
    const Real* xr = x.data() + r * d;
    Real mu = 0;
    for (std::size_t j = 0; j < d; ++j) mu += xr[j];
    mu /= static_cast<Real>(d);
    Real var = 0;
    for (std::size_t j = 0; j < d; ++j) var += (xr[j] - mu) * (xr[j] - mu);
    var /= static_cast<Real>(d);
    const Real rs = Real{1} / std::sqrt(var + eps);
    mean[r] = mu;
    rstd[r] = rs;
    for (std::size_t j = 0; j < d; ++j) y[r * d + j] = (xr[j] - mu) * rs * gamma[j] + beta[j];
  }
}

template <typename Real>
void layer_norm_backward(std::span<const Real> x, std::span<const Real> gamma,
                         std::span<const Real> mean, std::span<const Real> rstd,
                         std::span<const Real> dy, std::span<Real> dx, std::span<Real> dgamma,
                         std::span<Real> dbeta, std::size_t d) {
  const std::size_t rows = x.size() / d;
  for (std::size_t r = 0; r < rows; ++r) {
    const Real* xr = x.data() + r * d;
    const Real* dyr = dy.data() + r * d;
    Real sum_g = 0;
    Real sum_gx = 0;
    for (std::size_t j = 0; j < d; ++j) {
      const Real xhat = (xr[j] - mean[r]) * rstd[r];
      const Real g = dyr[j] * gamma[j];
      sum_g += g;
      sum_gx += g * xhat;
      if (!dgamma.empty()) dgamma[j] += dyr[j] * xhat;
      if (!dbeta.empty()) dbeta[j] += dyr[j];
    }
    if (dx.empty()) continue;
    const Real inv_d = Real{1} / static_cast<Real>(d);
    for (std::size_t j = 0; j < d; ++j) {
      const Real xhat = (xr[j] - mean[r]) * rstd[r];
      const Real g = dyr[j] * gamma[j];
      dx[r * d + j] += rstd[r] * (g - sum_g * inv_d - xhat * sum_gx * inv_d);
    }
  }
}

template <typename Real>
void gelu(std::span<const Real> x, std::span<Real> y) {
  const Real inv_sqrt2 = Real{1} / std::sqrt(Real{2});
  for (std::size_t i = 0; i < x.size(); ++i) {
    y[i] = Real{0.5} * x[i] * (Real{1} + std::erf(x[i] * inv_sqrt2));
  }
}

template <typename Real>
void gelu_backward(std::span<const Real> x, std::span<const Real> dy, std::span<Real> dx) {
  const Real inv_sqrt2 = Real{1} / std::sqrt(Real{2});
  const Real inv_sqrt_2pi = Real{1} / std::sqrt(Real{2} * static_cast<Real>(M_PI));
  for (std::size_t i = 0; i < x.size(); ++i) {
    const Real cdf = Real{0.5} * (Real{1} + std::erf(x[i] * inv_sqrt2));
    const Real pdf = inv_sqrt_2pi * std::exp(Real{-0.5} * x[i] * x[i]);
    dx[i] += dy[i] * (cdf + x[i] * pdf);
  }
}

#include "instantiate.inc"

}  // namespace mgp::kernels::serial
