#pragma once

// Differentiable primitives. Every op accepts optional leading batch axes and
// works on the trailing axes named in its comment; gradients follow the
// hand-derived rules in ops.cpp.

#include <cstdint>
#include <optional>
#include <span>

#include "mgp/autograd.hpp"
#include "mgp/kernels.hpp"

namespace mgp::nn {

using kernels::Trans;

// How a linear weight is stored: [in, out] (y = x W) or [out, in] (y = x W^T).
enum class WeightLayout { kInOut, kOutIn };

// [M, K] x [K, N] -> [M, N].
template <typename Real>
Var<Real> matmul(const Var<Real>& a, const Var<Real>& b);

// Batched product over the last two axes; leading axes must agree.
template <typename Real>
Var<Real> bmm(const Var<Real>& a, const Var<Real>& b, Trans ta = Trans::kNo,
              Trans tb = Trans::kNo);

// Affine map over the last axis. `bias` may be an undefined Var.
template <typename Real>
Var<Real> linear(const Var<Real>& x, const Var<Real>& weight, const Var<Real>& bias,
                 WeightLayout layout = WeightLayout::kInOut);

template <typename Real>
Var<Real> add(const Var<Real>& a, const Var<Real>& b);

// x + y where y's shape equals the trailing axes of x's shape.
template <typename Real>
Var<Real> add_broadcast(const Var<Real>& x, const Var<Real>& y);

template <typename Real>
Var<Real> scale(const Var<Real>& x, Real s);

// Inserts `row` ([1, D]) in front of the second-to-last axis: [.., N, D] -> [.., N+1, D].
template <typename Real>
Var<Real> prepend_row(const Var<Real>& x, const Var<Real>& row);

// Negative axes count from the back.
template <typename Real>
Var<Real> softmax(const Var<Real>& x, int axis);

template <typename Real>
Var<Real> layer_norm(const Var<Real>& x, const Var<Real>& gamma, const Var<Real>& beta,
                     Real eps = Real{1e-6});

template <typename Real>
Var<Real> gelu(const Var<Real>& x);

// Mean over rows of -log softmax(logits)[row, target]. Rows whose target equals
// `ignore_index` are excluded from both the sum and the count.
template <typename Real>
Var<Real> cross_entropy(const Var<Real>& logits, std::span<const std::int32_t> targets,
                        std::optional<std::int32_t> ignore_index = std::nullopt);

// [.., S, D] -> [.., heads, S, D / heads] and back.
template <typename Real>
Var<Real> split_heads(const Var<Real>& x, std::size_t heads);
template <typename Real>
Var<Real> merge_heads(const Var<Real>& x);

template <typename Real>
Var<Real> sum(const Var<Real>& x);

// sum(x * w) for a constant tensor w of the same shape.
template <typename Real>
Var<Real> weighted_sum(const Var<Real>& x, const Tensor<Real>& w);

template <typename Real>
struct AttentionParams {
  Var<Real> q_weight, q_bias;
  Var<Real> k_weight, k_bias;
  Var<Real> v_weight, v_bias;
  Var<Real> out_weight, out_bias;
};

// Scaled dot-product self-attention with `heads` heads over [.., S, D]. Weights
// are [D, D] in kInOut layout.
template <typename Real>
Var<Real> multi_head_self_attention(const Var<Real>& x, const AttentionParams<Real>& p,
                                    std::size_t heads);

}  // namespace mgp::nn
