#include <omp.h>

#include <algorithm>
#include <cmath>
#include <cstring>
#include <string>
#include <vector>

#include "mgp/errors.hpp"
#include "mgp/kernels.hpp"

namespace mgp::kernels::omp {

namespace {

// 512-bit lanes via GCC vector extensions; narrower targets get split ops.
template <typename Real>
struct Simd;
template <>
struct Simd<float> {
  typedef float V __attribute__((vector_size(64)));
  static constexpr std::size_t kLanes = 16;
};
template <>
struct Simd<double> {
  typedef double V __attribute__((vector_size(64)));
  static constexpr std::size_t kLanes = 8;
};

constexpr std::size_t kMR = 6;
template <typename Real>
constexpr std::size_t kNR = 2 * Simd<Real>::kLanes;
constexpr std::size_t kKC = 256;
constexpr std::size_t kMC = 120;
constexpr std::size_t kNC = 2048;
// Row chunk for deterministic column reductions.
constexpr std::size_t kReduceRows = 64;

template <typename Real>
Real op_at(ConstMatrixRef<Real> m, Trans t, std::size_t i, std::size_t j) {
  return t == Trans::kNo ? m.data[i * m.ld + j] : m.data[j * m.ld + i];
}

// op(B)[pc:pc+kc, jc:jc+nc] -> column panels of width NR, k-major inside a panel.
template <typename Real>
void pack_b(ConstMatrixRef<Real> b, Trans tb, std::size_t pc, std::size_t kc, std::size_t jc,
            std::size_t nc, Real* out) {
  constexpr std::size_t nr = kNR<Real>;
  for (std::size_t j0 = 0; j0 < nc; j0 += nr) {
    const std::size_t w = std::min(nr, nc - j0);
    Real* panel = out + j0 * kc;
    if (tb == Trans::kNo) {
      for (std::size_t p = 0; p < kc; ++p) {
        const Real* src = b.data + (pc + p) * b.ld + jc + j0;
        Real* dst = panel + p * nr;
        std::size_t j = 0;
        for (; j < w; ++j) dst[j] = src[j];
        for (; j < nr; ++j) dst[j] = Real{0};
      }
    } else {
      for (std::size_t j = 0; j < nr; ++j) {
        if (j < w) {
          const Real* src = b.data + (jc + j0 + j) * b.ld + pc;
          for (std::size_t p = 0; p < kc; ++p) panel[p * nr + j] = src[p];
        } else {
          for (std::size_t p = 0; p < kc; ++p) panel[p * nr + j] = Real{0};
        }
      }
    }
  }
}

// op(A)[ic:ic+mc, pc:pc+kc] -> row panels of height MR, k-major inside a panel.
template <typename Real>
void pack_a(ConstMatrixRef<Real> a, Trans ta, std::size_t ic, std::size_t mc, std::size_t pc,
            std::size_t kc, Real* out) {
  for (std::size_t i0 = 0; i0 < mc; i0 += kMR) {
    const std::size_t h = std::min(kMR, mc - i0);
    Real* panel = out + i0 * kc;
    for (std::size_t p = 0; p < kc; ++p) {
      for (std::size_t r = 0; r < kMR; ++r) {
        panel[p * kMR + r] = r < h ? op_at(a, ta, ic + i0 + r, pc + p) : Real{0};
      }
    }
  }
}

template <typename Real>
inline void micro_kernel(std::size_t kc, const Real* pa, const Real* pb, Real* tile) {
  using V = typename Simd<Real>::V;
  constexpr std::size_t lanes = Simd<Real>::kLanes;
  V acc[kMR][2] = {};
  for (std::size_t p = 0; p < kc; ++p) {
    V b0;
    V b1;
    std::memcpy(&b0, pb, sizeof(V));
    std::memcpy(&b1, pb + lanes, sizeof(V));
#pragma GCC unroll 6
    for (std::size_t r = 0; r < kMR; ++r) {
      acc[r][0] += pa[r] * b0;
      acc[r][1] += pa[r] * b1;
    }
    pa += kMR;
    pb += 2 * lanes;
  }
  for (std::size_t r = 0; r < kMR; ++r) {
    std::memcpy(tile + r * 2 * lanes, &acc[r][0], sizeof(V));
    std::memcpy(tile + r * 2 * lanes + lanes, &acc[r][1], sizeof(V));
  }
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
  if (k == 0) {
    for (std::size_t i = 0; i < m; ++i) {
      for (std::size_t j = 0; j < n; ++j) {
        Real& out = c.data[i * c.ld + j];
        out = beta == Real{0} ? Real{0} : beta * out;
      }
    }
    return;
  }

  constexpr std::size_t nr = kNR<Real>;
  const std::size_t nc_max = std::min(kNC, (n + nr - 1) / nr * nr);
  std::vector<Real> bpack(nc_max * std::min(kKC, k));
  const std::size_t mblocks = (m + kMC - 1) / kMC;

  for (std::size_t jc = 0; jc < n; jc += kNC) {
    const std::size_t nc = std::min(kNC, n - jc);
    for (std::size_t pc = 0; pc < k; pc += kKC) {
      const std::size_t kc = std::min(kKC, k - pc);
      const bool first = pc == 0;
      pack_b(b, tb, pc, kc, jc, nc, bpack.data());

#pragma omp parallel for schedule(static) if (mblocks > 1)
      for (std::size_t blk = 0; blk < mblocks; ++blk) {
        thread_local std::vector<Real> apack;
        apack.resize(kMC * kKC);
        alignas(64) Real tile[kMR * nr];
        const std::size_t ic = blk * kMC;
        const std::size_t mc = std::min(kMC, m - ic);
        pack_a(a, ta, ic, mc, pc, kc, apack.data());
        for (std::size_t j0 = 0; j0 < nc; j0 += nr) {
          const std::size_t w = std::min(nr, nc - j0);
          for (std::size_t i0 = 0; i0 < mc; i0 += kMR) {
            const std::size_t h = std::min(kMR, mc - i0);
            micro_kernel<Real>(kc, apack.data() + i0 * kc, bpack.data() + j0 * kc, tile);
            for (std::size_t r = 0; r < h; ++r) {
              Real* crow = c.data + (ic + i0 + r) * c.ld + jc + j0;
              const Real* trow = tile + r * nr;
              if (!first) {
                for (std::size_t j = 0; j < w; ++j) crow[j] += alpha * trow[j];
              } else if (beta == Real{0}) {
                for (std::size_t j = 0; j < w; ++j) crow[j] = alpha * trow[j];
              } else {
                for (std::size_t j = 0; j < w; ++j) crow[j] = beta * crow[j] + alpha * trow[j];
              }
            }
          }
        }
      }
    }
  }
}

template <typename Real>
void softmax(std::span<const Real> x, std::span<Real> y, std::size_t outer, std::size_t n,
             std::size_t inner) {
  const std::size_t lines = outer * inner;
#pragma omp parallel for schedule(static)
  for (std::size_t line = 0; line < lines; ++line) {
    const std::size_t o = line / inner;
    const std::size_t s = line % inner;
    const Real* xs = x.data() + o * n * inner + s;
    Real* ys = y.data() + o * n * inner + s;
    Real mx = xs[0];
    for (std::size_t i = 1; i < n; ++i) mx = std::max(mx, xs[i * inner]);
    Real sum = 0;
    for (std::size_t i = 0; i < n; ++i) {
      const Real e = std::exp(xs[i * inner] - mx);
      ys[i * inner] = e;
      sum += e;
    }
    const Real inv = Real{1} / sum;
    for (std::size_t i = 0; i < n; ++i) ys[i * inner] *= inv;
  }
}

template <typename Real>
void softmax_backward(std::span<const Real> y, std::span<const Real> dy, std::span<Real> dx,
                      std::size_t outer, std::size_t n, std::size_t inner) {
  const std::size_t lines = outer * inner;
#pragma omp parallel for schedule(static)
  for (std::size_t line = 0; line < lines; ++line) {
    const std::size_t base = (line / inner) * n * inner + line % inner;
    Real dot = 0;
    for (std::size_t i = 0; i < n; ++i) dot += y[base + i * inner] * dy[base + i * inner];
    for (std::size_t i = 0; i < n; ++i) {
      const std::size_t at = base + i * inner;
      dx[at] += y[at] * (dy[at] - dot);
    }
  }
}

template <typename Real>
void layer_norm(std::span<const Real> x, std::span<const Real> gamma, std::span<const Real> beta,
                std::span<Real> y, std::span<Real> mean, std::span<Real> rstd, std::size_t d,
                Real eps) {
  const std::size_t rows = x.size() / d;
  const Real inv_d = Real{1} / static_cast<Real>(d);
#pragma omp parallel for schedule(static)
  for (std::size_t r = 0; r < rows; ++r) {
    const Real* xr = x.data() + r * d;
    Real* yr = y.data() + r * d;
    Real mu = 0;
    for (std::size_t j = 0; j < d; ++j) mu += xr[j];
    mu *= inv_d;
    Real var = 0;
    for (std::size_t j = 0; j < d; ++j) var += (xr[j] - mu) * (xr[j] - mu);
    var *= inv_d;
    const Real rs = Real{1} / std::sqrt(var + eps);
    mean[r] = mu;
    rstd[r] = rs;
    for (std::size_t j = 0; j < d; ++j) yr[j] = (xr[j] - mu) * rs * gamma[j] + beta[j];
  }
}

template <typename Real>
void layer_norm_backward(std::span<const Real> x, std::span<const Real> gamma,
                         std::span<const Real> mean, std::span<const Real> rstd,
                         std::span<const Real> dy, std::span<Real> dx, std::span<Real> dgamma,
                         std::span<Real> dbeta, std::size_t d) {
  const std::size_t rows = x.size() / d;
  const Real inv_d = Real{1} / static_cast<Real>(d);

  if (!dx.empty()) {
#pragma omp parallel for schedule(static)
    for (std::size_t r = 0; r < rows; ++r) {
      const Real* xr = x.data() + r * d;
      const Real* dyr = dy.data() + r * d;
      Real* dxr = dx.data() + r * d;
      Real sum_g = 0;
      Real sum_gx = 0;
      for (std::size_t j = 0; j < d; ++j) {
        const Real g = dyr[j] * gamma[j];
        sum_g += g;
        sum_gx += g * (xr[j] - mean[r]) * rstd[r];
      }
      for (std::size_t j = 0; j < d; ++j) {
        const Real xhat = (xr[j] - mean[r]) * rstd[r];
        dxr[j] += rstd[r] * (dyr[j] * gamma[j] - sum_g * inv_d - xhat * sum_gx * inv_d);
      }
    }
  }

  if (dgamma.empty() && dbeta.empty()) return;
  // Fixed-size row chunks reduced in chunk order keep the result independent of thread count.
  const std::size_t chunks = (rows + kReduceRows - 1) / kReduceRows;
  std::vector<Real> part_g(chunks * d, Real{0});
  std::vector<Real> part_b(chunks * d, Real{0});
#pragma omp parallel for schedule(static)
  for (std::size_t ch = 0; ch < chunks; ++ch) {
    Real* pg = part_g.data() + ch * d;
    Real* pb = part_b.data() + ch * d;
    const std::size_t end = std::min(rows, (ch + 1) * kReduceRows);
    for (std::size_t r = ch * kReduceRows; r < end; ++r) {
      const Real* xr = x.data() + r * d;
      const Real* dyr = dy.data() + r * d;
      for (std::size_t j = 0; j < d; ++j) {
        pg[j] += dyr[j] * (xr[j] - mean[r]) * rstd[r];
        pb[j] += dyr[j];
      }
    }
  }
  for (std::size_t ch = 0; ch < chunks; ++ch) {
    for (std::size_t j = 0; j < d; ++j) {
      if (!dgamma.empty()) dgamma[j] += part_g[ch * d + j];
      if (!dbeta.empty()) dbeta[j] += part_b[ch * d + j];
    }
  }
}

template <typename Real>
void gelu(std::span<const Real> x, std::span<Real> y) {
  const Real inv_sqrt2 = Real{1} / std::sqrt(Real{2});
  const std::size_t n = x.size();
#pragma omp parallel for schedule(static)
  for (std::size_t i = 0; i < n; ++i) {
    y[i] = Real{0.5} * x[i] * (Real{1} + std::erf(x[i] * inv_sqrt2));
  }
}

template <typename Real>
void gelu_backward(std::span<const Real> x, std::span<const Real> dy, std::span<Real> dx) {
  const Real inv_sqrt2 = Real{1} / std::sqrt(Real{2});
  const Real inv_sqrt_2pi = Real{1} / std::sqrt(Real{2} * static_cast<Real>(M_PI));
  const std::size_t n = x.size();
#pragma omp parallel for schedule(static)
  for (std::size_t i = 0; i < n; ++i) {
    const Real cdf = Real{0.5} * (Real{1} + std::erf(x[i] * inv_sqrt2));
    const Real pdf = inv_sqrt_2pi * std::exp(Real{-0.5} * x[i] * x[i]);
    dx[i] += dy[i] * (cdf + x[i] * pdf);
  }
}

#include "instantiate.inc"

}  // namespace mgp::kernels::omp
