#include "mgp/ops.hpp"

#include <cmath>
#include <string>

namespace mgp::nn {

namespace k = mgp::kernels::omp;
using kernels::ConstMatrixRef;
using kernels::MatrixRef;

namespace {

Trans flip(Trans t) { return t == Trans::kNo ? Trans::kYes : Trans::kNo; }

template <typename Real>
ConstMatrixRef<Real> cref(const Real* p, std::size_t rows, std::size_t cols) {
  return {p, rows, cols, cols};
}
template <typename Real>
MatrixRef<Real> mref(Real* p, std::size_t rows, std::size_t cols) {
  return {p, rows, cols, cols};
}

void require(bool ok, const std::string& what) {
  if (!ok) throw DimensionError(what);
}

std::size_t leading(const Shape& s, std::size_t trailing) {
  std::size_t n = 1;
  for (std::size_t i = 0; i + trailing < s.size(); ++i) n *= s[i];
  return n;
}

std::size_t normalize_axis(int axis, std::size_t rank) {
  const int r = static_cast<int>(rank);
  const int a = axis < 0 ? axis + r : axis;
  if (a < 0 || a >= r) throw DimensionError("axis " + std::to_string(axis) + " out of range");
  return static_cast<std::size_t>(a);
}

}  // namespace

template <typename Real>
Var<Real> matmul(const Var<Real>& a, const Var<Real>& b) {
  require(a.value().rank() == 2 && b.value().rank() == 2, "matmul expects rank-2 operands");
  return bmm(a, b);
}

template <typename Real>
Var<Real> bmm(const Var<Real>& a, const Var<Real>& b, Trans ta, Trans tb) {
  const Shape& sa = a.shape();
  const Shape& sb = b.shape();
  require(sa.size() >= 2 && sa.size() == sb.size(), "bmm: ranks " + shape_str(sa) + " vs " + shape_str(sb));
  for (std::size_t i = 0; i + 2 < sa.size(); ++i) {
    require(sa[i] == sb[i], "bmm: batch extents differ " + shape_str(sa) + " vs " + shape_str(sb));
  }
  const std::size_t ar = sa[sa.size() - 2], ac = sa.back();
  const std::size_t br = sb[sb.size() - 2], bc = sb.back();
  const std::size_t m = ta == Trans::kNo ? ar : ac;
  const std::size_t kk = ta == Trans::kNo ? ac : ar;
  const std::size_t kb = tb == Trans::kNo ? br : bc;
  const std::size_t n = tb == Trans::kNo ? bc : br;
  require(kk == kb, "matmul: inner extents differ " + shape_str(sa) + " vs " + shape_str(sb));

  const std::size_t batch = leading(sa, 2);
  Shape so(sa.begin(), sa.end() - 2);
  so.push_back(m);
  so.push_back(n);
  Tensor<Real> out(so);
  const Real* pa = a.value().ptr();
  const Real* pb = b.value().ptr();
  Real* po = out.ptr();
#pragma omp parallel for schedule(static) if (batch > 1)
  for (std::size_t i = 0; i < batch; ++i) {
    k::gemm<Real>(ta, cref(pa + i * ar * ac, ar, ac), tb, cref(pb + i * br * bc, br, bc),
                  mref(po + i * m * n, m, n), Real{1}, Real{0});
  }

  return make_op_result<Real>(std::move(out), {a, b}, [=](Node<Real>& self) {
    Node<Real>& na = *self.inputs[0];
    Node<Real>& nb = *self.inputs[1];
    const Real* dc = self.grad.ptr();
    const Real* va = na.value.ptr();
    const Real* vb = nb.value.ptr();
    Real* ga = na.requires_grad ? na.grad_buffer().ptr() : nullptr;
    Real* gb = nb.requires_grad ? nb.grad_buffer().ptr() : nullptr;
#pragma omp parallel for schedule(static) if (batch > 1)
    for (std::size_t i = 0; i < batch; ++i) {
      auto dci = cref(dc + i * m * n, m, n);
      auto ai = cref(va + i * ar * ac, ar, ac);
      auto bi = cref(vb + i * br * bc, br, bc);
      if (ga) {
        auto gai = mref(ga + i * ar * ac, ar, ac);
        if (ta == Trans::kNo) {
          k::gemm<Real>(Trans::kNo, dci, flip(tb), bi, gai, Real{1}, Real{1});
        } else {
          k::gemm<Real>(tb, bi, Trans::kYes, dci, gai, Real{1}, Real{1});
        }
      }
      if (gb) {
        auto gbi = mref(gb + i * br * bc, br, bc);
        if (tb == Trans::kNo) {
          k::gemm<Real>(flip(ta), ai, Trans::kNo, dci, gbi, Real{1}, Real{1});
        } else {
          k::gemm<Real>(Trans::kYes, dci, ta, ai, gbi, Real{1}, Real{1});
        }
      }
    }
  });
}

template <typename Real>
Var<Real> linear(const Var<Real>& x, const Var<Real>& weight, const Var<Real>& bias,
                 WeightLayout layout) {
  const Tensor<Real>& w = weight.value();
  require(w.rank() == 2, "linear: weight must be rank 2");
  const std::size_t in = layout == WeightLayout::kInOut ? w.dim(0) : w.dim(1);
  const std::size_t out_dim = layout == WeightLayout::kInOut ? w.dim(1) : w.dim(0);
  require(x.value().cols() == in, "linear: input width " + std::to_string(x.value().cols()) +
                                      " does not match weight " + shape_str(w.shape()));
  if (bias.defined()) {
    require(bias.value().size() == out_dim, "linear: bias width mismatch");
  }
  const std::size_t rows = x.value().rows();
  const Trans tw = layout == WeightLayout::kInOut ? Trans::kNo : Trans::kYes;

  Shape so = x.shape();
  so.back() = out_dim;
  Tensor<Real> out(so);
  k::gemm<Real>(Trans::kNo, cref(x.value().ptr(), rows, in), tw, cref(w.ptr(), w.dim(0), w.dim(1)),
                mref(out.ptr(), rows, out_dim), Real{1}, Real{0});
  if (bias.defined()) {
    const Real* b = bias.value().ptr();
    Real* o = out.ptr();
#pragma omp parallel for schedule(static)
    for (std::size_t r = 0; r < rows; ++r) {
      for (std::size_t j = 0; j < out_dim; ++j) o[r * out_dim + j] += b[j];
    }
  }

  std::vector<Var<Real>> inputs{x, weight};
  if (bias.defined()) inputs.push_back(bias);
  return make_op_result<Real>(std::move(out), std::move(inputs), [=](Node<Real>& self) {
    Node<Real>& nx = *self.inputs[0];
    Node<Real>& nw = *self.inputs[1];
    const Real* dy = self.grad.ptr();
    const Tensor<Real>& wv = nw.value;
    if (nx.requires_grad) {
      // dx = dy * op(W)^T
      k::gemm<Real>(Trans::kNo, cref(dy, rows, out_dim), flip(tw),
                    cref(wv.ptr(), wv.dim(0), wv.dim(1)),
                    mref(nx.grad_buffer().ptr(), rows, in), Real{1}, Real{1});
    }
    if (nw.requires_grad) {
      Real* gw = nw.grad_buffer().ptr();
      if (tw == Trans::kNo) {
        k::gemm<Real>(Trans::kYes, cref(nx.value.ptr(), rows, in), Trans::kNo,
                      cref(dy, rows, out_dim), mref(gw, in, out_dim), Real{1}, Real{1});
      } else {
        k::gemm<Real>(Trans::kYes, cref(dy, rows, out_dim), Trans::kNo,
                      cref(nx.value.ptr(), rows, in), mref(gw, out_dim, in), Real{1}, Real{1});
      }
    }
    if (self.inputs.size() > 2 && self.inputs[2]->requires_grad) {
      Real* gb = self.inputs[2]->grad_buffer().ptr();
      for (std::size_t r = 0; r < rows; ++r) {
        for (std::size_t j = 0; j < out_dim; ++j) gb[j] += dy[r * out_dim + j];
      }
    }
  });
}

template <typename Real>
Var<Real> add(const Var<Real>& a, const Var<Real>& b) {
  require(a.shape() == b.shape(), "add: shapes " + shape_str(a.shape()) + " vs " + shape_str(b.shape()));
  Tensor<Real> out = a.value();
  const Real* pb = b.value().ptr();
  Real* po = out.ptr();
  const std::size_t n = out.size();
  for (std::size_t i = 0; i < n; ++i) po[i] += pb[i];
  return make_op_result<Real>(std::move(out), {a, b}, [n](Node<Real>& self) {
    const Real* dy = self.grad.ptr();
    for (auto& in : self.inputs) {
      if (!in->requires_grad) continue;
      Real* g = in->grad_buffer().ptr();
      for (std::size_t i = 0; i < n; ++i) g[i] += dy[i];
    }
  });
}

template <typename Real>
Var<Real> add_broadcast(const Var<Real>& x, const Var<Real>& y) {
  const Shape& sx = x.shape();
  const Shape& sy = y.shape();
  require(sy.size() <= sx.size() && std::equal(sy.rbegin(), sy.rend(), sx.rbegin()),
          "add_broadcast: " + shape_str(sy) + " is not a suffix of " + shape_str(sx));
  const std::size_t inner = y.value().size();
  const std::size_t outer = x.value().size() / inner;
  Tensor<Real> out = x.value();
  const Real* py = y.value().ptr();
  Real* po = out.ptr();
  for (std::size_t o = 0; o < outer; ++o) {
    for (std::size_t i = 0; i < inner; ++i) po[o * inner + i] += py[i];
  }
  return make_op_result<Real>(std::move(out), {x, y}, [=](Node<Real>& self) {
    const Real* dy = self.grad.ptr();
    if (self.inputs[0]->requires_grad) {
      Real* g = self.inputs[0]->grad_buffer().ptr();
      for (std::size_t i = 0; i < outer * inner; ++i) g[i] += dy[i];
    }
    if (self.inputs[1]->requires_grad) {
      Real* g = self.inputs[1]->grad_buffer().ptr();
      for (std::size_t o = 0; o < outer; ++o) {
        for (std::size_t i = 0; i < inner; ++i) g[i] += dy[o * inner + i];
      }
    }
  });
}

template <typename Real>
Var<Real> scale(const Var<Real>& x, Real s) {
  Tensor<Real> out = x.value();
  for (Real& v : out.data()) v *= s;
  return make_op_result<Real>(std::move(out), {x}, [s](Node<Real>& self) {
    Real* g = self.inputs[0]->grad_buffer().ptr();
    const Real* dy = self.grad.ptr();
    for (std::size_t i = 0; i < self.grad.size(); ++i) g[i] += s * dy[i];
  });
}

template <typename Real>
Var<Real> prepend_row(const Var<Real>& x, const Var<Real>& row) {
  const Shape& sx = x.shape();
  require(sx.size() >= 2, "prepend_row: input must have rank >= 2");
  const std::size_t d = sx.back();
  const std::size_t n = sx[sx.size() - 2];
  require(row.value().size() == d, "prepend_row: row width mismatch");
  const std::size_t batch = leading(sx, 2);
  Shape so = sx;
  so[so.size() - 2] = n + 1;
  Tensor<Real> out(so);
  const Real* px = x.value().ptr();
  const Real* pr = row.value().ptr();
  Real* po = out.ptr();
  for (std::size_t b = 0; b < batch; ++b) {
    Real* dst = po + b * (n + 1) * d;
    std::copy(pr, pr + d, dst);
    std::copy(px + b * n * d, px + (b + 1) * n * d, dst + d);
  }
  return make_op_result<Real>(std::move(out), {x, row}, [=](Node<Real>& self) {
    const Real* dy = self.grad.ptr();
    if (self.inputs[0]->requires_grad) {
      Real* g = self.inputs[0]->grad_buffer().ptr();
      for (std::size_t b = 0; b < batch; ++b) {
        const Real* src = dy + b * (n + 1) * d + d;
        for (std::size_t i = 0; i < n * d; ++i) g[b * n * d + i] += src[i];
      }
    }
    if (self.inputs[1]->requires_grad) {
      Real* g = self.inputs[1]->grad_buffer().ptr();
      for (std::size_t b = 0; b < batch; ++b) {
        for (std::size_t j = 0; j < d; ++j) g[j] += dy[b * (n + 1) * d + j];
      }
    }
  });
}

template <typename Real>
Var<Real> softmax(const Var<Real>& x, int axis) {
  const Shape& s = x.shape();
  const std::size_t ax = normalize_axis(axis, s.size());
  std::size_t outer = 1, inner = 1;
  for (std::size_t i = 0; i < ax; ++i) outer *= s[i];
  for (std::size_t i = ax + 1; i < s.size(); ++i) inner *= s[i];
  const std::size_t n = s[ax];
  Tensor<Real> out(s);
  k::softmax<Real>(x.value().data(), out.data(), outer, n, inner);
  return make_op_result<Real>(std::move(out), {x}, [=](Node<Real>& self) {
    k::softmax_backward<Real>(self.value.data(), self.grad.data(),
                              self.inputs[0]->grad_buffer().data(), outer, n, inner);
  });
}

template <typename Real>
Var<Real> layer_norm(const Var<Real>& x, const Var<Real>& gamma, const Var<Real>& beta, Real eps) {
  const std::size_t d = x.value().cols();
  require(gamma.value().size() == d && beta.value().size() == d,
          "layer_norm: gamma/beta width must equal last extent " + std::to_string(d));
  const std::size_t rows = x.value().rows();
  Tensor<Real> out(x.shape());
  auto stats = std::make_shared<std::vector<Real>>(2 * rows);
  std::span<Real> mean(stats->data(), rows);
  std::span<Real> rstd(stats->data() + rows, rows);
  k::layer_norm<Real>(x.value().data(), gamma.value().data(), beta.value().data(), out.data(),
                      mean, rstd, d, eps);
  return make_op_result<Real>(std::move(out), {x, gamma, beta}, [=](Node<Real>& self) {
    Node<Real>& nx = *self.inputs[0];
    Node<Real>& ng = *self.inputs[1];
    Node<Real>& nb = *self.inputs[2];
    std::span<const Real> m(stats->data(), rows);
    std::span<const Real> r(stats->data() + rows, rows);
    k::layer_norm_backward<Real>(
        nx.value.data(), ng.value.data(), m, r, self.grad.data(),
        nx.requires_grad ? nx.grad_buffer().data() : std::span<Real>{},
        ng.requires_grad ? ng.grad_buffer().data() : std::span<Real>{},
        nb.requires_grad ? nb.grad_buffer().data() : std::span<Real>{}, d);
  });
}

template <typename Real>
Var<Real> gelu(const Var<Real>& x) {
  Tensor<Real> out(x.shape());
  k::gelu<Real>(x.value().data(), out.data());
  return make_op_result<Real>(std::move(out), {x}, [](Node<Real>& self) {
    Node<Real>& nx = *self.inputs[0];
    k::gelu_backward<Real>(nx.value.data(), self.grad.data(), nx.grad_buffer().data());
  });
}

template <typename Real>
Var<Real> cross_entropy(const Var<Real>& logits, std::span<const std::int32_t> targets,
                        std::optional<std::int32_t> ignore_index) {
  const std::size_t kcls = logits.value().cols();
  const std::size_t rows = logits.value().rows();
  require(targets.size() == rows, "cross_entropy: " + std::to_string(targets.size()) +
                                      " targets for " + std::to_string(rows) + " rows");
  std::vector<std::int32_t> tgt(targets.begin(), targets.end());
  std::size_t counted = 0;
  for (std::int32_t t : tgt) {
    if (ignore_index && t == *ignore_index) continue;
    if (t < 0 || static_cast<std::size_t>(t) >= kcls) {
      throw LabelError("target id " + std::to_string(t) + " outside [0, " + std::to_string(kcls) + ")");
    }
    ++counted;
  }

  const Real* pl = logits.value().ptr();
  auto probs = std::make_shared<std::vector<Real>>(rows * kcls);
  Real total = 0;
  for (std::size_t r = 0; r < rows; ++r) {
    const Real* row = pl + r * kcls;
    Real mx = row[0];
    for (std::size_t j = 1; j < kcls; ++j) mx = std::max(mx, row[j]);
    Real z = 0;
    for (std::size_t j = 0; j < kcls; ++j) {
      const Real e = std::exp(row[j] - mx);
      (*probs)[r * kcls + j] = e;
      z += e;
    }
    for (std::size_t j = 0; j < kcls; ++j) (*probs)[r * kcls + j] /= z;
    if (ignore_index && tgt[r] == *ignore_index) continue;
    total += -(row[tgt[r]] - mx - std::log(z));
  }
  const Real denom = counted ? static_cast<Real>(counted) : Real{1};
  Tensor<Real> out = Tensor<Real>::scalar(total / denom);

  return make_op_result<Real>(std::move(out), {logits}, [=](Node<Real>& self) {
    const Real g = self.grad[0] / denom;
    Real* dl = self.inputs[0]->grad_buffer().ptr();
    for (std::size_t r = 0; r < rows; ++r) {
      if (ignore_index && tgt[r] == *ignore_index) continue;
      for (std::size_t j = 0; j < kcls; ++j) dl[r * kcls + j] += g * (*probs)[r * kcls + j];
      dl[r * kcls + tgt[r]] -= g;
    }
  });
}

template <typename Real>
Var<Real> split_heads(const Var<Real>& x, std::size_t heads) {
  const Shape& sx = x.shape();
  require(sx.size() >= 2 && sx.size() <= 3, "split_heads: expects [S, D] or [B, S, D]");
  const std::size_t d = sx.back();
  if (heads == 0 || d % heads != 0) {
    throw ConfigError("width " + std::to_string(d) + " not divisible by " +
                      std::to_string(heads) + " heads");
  }
  const std::size_t s = sx[sx.size() - 2];
  const std::size_t dh = d / heads;
  const std::size_t batch = leading(sx, 2);
  Shape so(sx.begin(), sx.end() - 2);
  so.insert(so.end(), {heads, s, dh});
  Tensor<Real> out(so);
  const Real* px = x.value().ptr();
  Real* po = out.ptr();
  for (std::size_t b = 0; b < batch; ++b) {
    for (std::size_t t = 0; t < s; ++t) {
      for (std::size_t h = 0; h < heads; ++h) {
        const Real* src = px + (b * s + t) * d + h * dh;
        std::copy(src, src + dh, po + ((b * heads + h) * s + t) * dh);
      }
    }
  }
  return make_op_result<Real>(std::move(out), {x}, [=](Node<Real>& self) {
    const Real* dy = self.grad.ptr();
    Real* g = self.inputs[0]->grad_buffer().ptr();
    for (std::size_t b = 0; b < batch; ++b) {
      for (std::size_t t = 0; t < s; ++t) {
        for (std::size_t h = 0; h < heads; ++h) {
          const Real* src = dy + ((b * heads + h) * s + t) * dh;
          Real* dst = g + (b * s + t) * d + h * dh;
          for (std::size_t j = 0; j < dh; ++j) dst[j] += src[j];
        }
      }
    }
  });
}

template <typename Real>
Var<Real> merge_heads(const Var<Real>& x) {
  const Shape& sx = x.shape();
  require(sx.size() >= 3, "merge_heads: expects [.., H, S, Dh]");
  const std::size_t heads = sx[sx.size() - 3];
  const std::size_t s = sx[sx.size() - 2];
  const std::size_t dh = sx.back();
  const std::size_t d = heads * dh;
  const std::size_t batch = leading(sx, 3);
  Shape so(sx.begin(), sx.end() - 3);
  so.insert(so.end(), {s, d});
  Tensor<Real> out(so);
  const Real* px = x.value().ptr();
  Real* po = out.ptr();
  for (std::size_t b = 0; b < batch; ++b) {
    for (std::size_t h = 0; h < heads; ++h) {
      for (std::size_t t = 0; t < s; ++t) {
        const Real* src = px + ((b * heads + h) * s + t) * dh;
        std::copy(src, src + dh, po + (b * s + t) * d + h * dh);
      }
    }
  }
  return make_op_result<Real>(std::move(out), {x}, [=](Node<Real>& self) {
    const Real* dy = self.grad.ptr();
    Real* g = self.inputs[0]->grad_buffer().ptr();
    for (std::size_t b = 0; b < batch; ++b) {
      for (std::size_t h = 0; h < heads; ++h) {
        for (std::size_t t = 0; t < s; ++t) {
          const Real* src = dy + (b * s + t) * d + h * dh;
          Real* dst = g + ((b * heads + h) * s + t) * dh;
          for (std::size_t j = 0; j < dh; ++j) dst[j] += src[j];
        }
      }
    }
  });
}

template <typename Real>
Var<Real> sum(const Var<Real>& x) {
  Real total = 0;
  for (Real v : x.value().data()) total += v;
  return make_op_result<Real>(Tensor<Real>::scalar(total), {x}, [](Node<Real>& self) {
    const Real g = self.grad[0];
    for (Real& v : self.inputs[0]->grad_buffer().data()) v += g;
  });
}

template <typename Real>
Var<Real> weighted_sum(const Var<Real>& x, const Tensor<Real>& w) {
  require(x.shape() == w.shape(), "weighted_sum: weight shape mismatch");
  Real total = 0;
  for (std::size_t i = 0; i < w.size(); ++i) total += x.value()[i] * w[i];
  return make_op_result<Real>(Tensor<Real>::scalar(total), {x}, [w](Node<Real>& self) {
    const Real g = self.grad[0];
    Real* dx = self.inputs[0]->grad_buffer().ptr();
    for (std::size_t i = 0; i < w.size(); ++i) dx[i] += g * w[i];
  });
}

template <typename Real>
Var<Real> multi_head_self_attention(const Var<Real>& x, const AttentionParams<Real>& p,
                                    std::size_t heads) {
  const std::size_t d = x.value().cols();
  if (heads == 0 || d % heads != 0) {
    throw ConfigError("attention width " + std::to_string(d) + " not divisible by " +
                      std::to_string(heads) + " heads");
  }
  const Real scale_factor = Real{1} / std::sqrt(static_cast<Real>(d / heads));
  Var<Real> q = split_heads(linear(x, p.q_weight, p.q_bias), heads);
  Var<Real> kx = split_heads(linear(x, p.k_weight, p.k_bias), heads);
  Var<Real> v = split_heads(linear(x, p.v_weight, p.v_bias), heads);
  Var<Real> scores = scale(bmm(q, kx, Trans::kNo, Trans::kYes), scale_factor);
  Var<Real> attn = softmax(scores, -1);
  Var<Real> ctx = merge_heads(bmm(attn, v));
  return linear(ctx, p.out_weight, p.out_bias);
}

#define MGP_INSTANTIATE(Real)                                                                    \
  template Var<Real> matmul(const Var<Real>&, const Var<Real>&);                                 \
  template Var<Real> bmm(const Var<Real>&, const Var<Real>&, Trans, Trans);                      \
  template Var<Real> linear(const Var<Real>&, const Var<Real>&, const Var<Real>&, WeightLayout); \
  template Var<Real> add(const Var<Real>&, const Var<Real>&);                                    \
  template Var<Real> add_broadcast(const Var<Real>&, const Var<Real>&);                          \
  template Var<Real> scale(const Var<Real>&, Real);                                              \
  template Var<Real> prepend_row(const Var<Real>&, const Var<Real>&);                            \
  template Var<Real> softmax(const Var<Real>&, int);                                             \
  template Var<Real> layer_norm(const Var<Real>&, const Var<Real>&, const Var<Real>&, Real);     \
  template Var<Real> gelu(const Var<Real>&);                                                     \
  template Var<Real> cross_entropy(const Var<Real>&, std::span<const std::int32_t>,              \
                                   std::optional<std::int32_t>);                                 \
  template Var<Real> split_heads(const Var<Real>&, std::size_t);                                 \
  template Var<Real> merge_heads(const Var<Real>&);                                              \
  template Var<Real> sum(const Var<Real>&);                                                      \
  template Var<Real> weighted_sum(const Var<Real>&, const Tensor<Real>&);                        \
  template Var<Real> multi_head_self_attention(const Var<Real>&, const AttentionParams<Real>&,   \
                                               std::size_t);

MGP_INSTANTIATE(float)
MGP_INSTANTIATE(double)

#undef MGP_INSTANTIATE

}  // namespace mgp::nn
