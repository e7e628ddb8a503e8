#include "mgp/mgp_heads.hpp"

#include <algorithm>

#include "mgp/errors.hpp"
#include "mgp/ops.hpp"

namespace mgp::model {

std::string head_prefix(Granularity g) { return "heads." + std::string(tok::to_string(g)) + "."; }

std::vector<std::pair<std::string, Shape>> head_param_shapes(const ModelConfig& cfg, Granularity g) {
  const std::string p = head_prefix(g);
  const std::size_t D = cfg.D, T = cfg.T, K = cfg.vocab_size(g);
  return {
      {p + "alpha.weight", {D, T}},
      {p + "U.weight", {D, D}},
      {p + "W.weight", {K, D}},
  };
}

template <typename Real>
ParamSet<Real> init_head_params(const ModelConfig& cfg, Granularity g, std::uint64_t seed) {
  ParamSet<Real> params;
  for (auto& [name, shape] : head_param_shapes(cfg, g)) {
    params.emplace(name, Var<Real>::leaf(trunc_normal<Real>(shape, 0.02, seed, name), true));
  }
  return params;
}

template <typename Real>
A3Output<Real> a3_forward(const Var<Real>& z_L, const ParamSet<Real>& params, const std::string& prefix) {
  auto logits = nn::linear(z_L, param(params, prefix + "alpha.weight"), Var<Real>{});
  auto masks = nn::softmax(logits, -2);
  auto features = nn::linear(z_L, param(params, prefix + "U.weight"), Var<Real>{});
  return {nn::bmm(masks, features, nn::Trans::kYes, nn::Trans::kNo), masks};
}

template <typename Real>
Var<Real> classify(const Var<Real>& Y, const ParamSet<Real>& params, const std::string& prefix) {
  return nn::linear(Y, param(params, prefix + "W.weight"), Var<Real>{}, nn::WeightLayout::kOutIn);
}

template <typename Real>
const HeadOutput<Real>& ModelOutput<Real>::head(Granularity g) const {
  const auto& h = heads[static_cast<std::size_t>(g)];
  if (!h) throw ConfigError("head '" + std::string(tok::to_string(g)) + "' is not enabled");
  return *h;
}

template <typename Real>
std::array<std::optional<HeadOutput<Real>>, 3> mgp_forward(const Var<Real>& z_L, const ParamSet<Real>& params,
                                                           const ModelConfig& cfg) {
  std::array<std::optional<HeadOutput<Real>>, 3> out;
  for (auto g : kAllGranularities) {
    if (!cfg.has_head(g)) continue;
    const std::string p = head_prefix(g);
    auto a3 = a3_forward(z_L, params, p);
    out[static_cast<std::size_t>(g)] = HeadOutput<Real>{classify(a3.Y, params, p), a3.masks};
  }
  return out;
}

template <typename Real>
Tensor<Real> mask_rows(const Tensor<Real>& masks) {
  const std::size_t S = masks.dim(masks.rank() - 2), T = masks.cols(), B = masks.size() / (S * T);
  Shape shape = masks.shape();
  std::swap(shape[shape.size() - 1], shape[shape.size() - 2]);
  Tensor<Real> out(shape);
  for (std::size_t b = 0; b < B; ++b) {
    const Real* src = masks.ptr() + b * S * T;
    Real* dst = out.ptr() + b * S * T;
    for (std::size_t s = 0; s < S; ++s) {
      for (std::size_t t = 0; t < T; ++t) dst[t * S + s] = src[s * T + t];
    }
  }
  return out;
}

template <typename Real>
std::vector<std::pair<std::string, Shape>> MgpModel<Real>::param_shapes(const ModelConfig& cfg) {
  auto shapes = backbone_param_shapes(cfg);
  for (auto g : kAllGranularities) {
    if (!cfg.has_head(g)) continue;
    auto h = head_param_shapes(cfg, g);
    shapes.insert(shapes.end(), h.begin(), h.end());
  }
  std::sort(shapes.begin(), shapes.end());
  return shapes;
}

template <typename Real>
MgpModel<Real>::MgpModel(ModelConfig cfg, std::uint64_t seed) : cfg_(std::move(cfg)) {
  cfg_.validate();
  params_ = init_backbone_params<Real>(cfg_, seed);
  for (auto g : kAllGranularities) {
    if (cfg_.has_head(g)) params_.merge(init_head_params<Real>(cfg_, g, seed));
  }
}

template <typename Real>
MgpModel<Real>::MgpModel(ModelConfig cfg, ParamSet<Real> params) : cfg_(std::move(cfg)), params_(std::move(params)) {
  cfg_.validate();
  const auto expected = param_shapes(cfg_);
  if (expected.size() != params_.size()) {
    throw ConfigError("expected " + std::to_string(expected.size()) + " parameters, got " +
                      std::to_string(params_.size()));
  }
  for (const auto& [name, shape] : expected) {
    auto it = params_.find(name);
    if (it == params_.end()) throw ConfigError("missing parameter '" + name + "'");
    if (it->second.shape() != shape) {
      throw ConfigError("parameter '" + name + "' has shape " + shape_str(it->second.shape()) + ", expected " +
                        shape_str(shape));
    }
  }
}

template <typename Real>
ModelOutput<Real> MgpModel<Real>::forward(const Tensor<Real>& images) const {
  ModelOutput<Real> out;
  out.z_L = backbone_forward(images, params_, cfg_);
  out.heads = mgp_forward(out.z_L, params_, cfg_);
  return out;
}

#define MGP_INSTANTIATE_HEADS(Real)                                                                           \
  template ParamSet<Real> init_head_params<Real>(const ModelConfig&, Granularity, std::uint64_t);           \
  template A3Output<Real> a3_forward<Real>(const Var<Real>&, const ParamSet<Real>&, const std::string&);   \
  template Var<Real> classify<Real>(const Var<Real>&, const ParamSet<Real>&, const std::string&);          \
  template std::array<std::optional<HeadOutput<Real>>, 3> mgp_forward<Real>(const Var<Real>&,              \
                                                                            const ParamSet<Real>&,         \
                                                                            const ModelConfig&);           \
  template Tensor<Real> mask_rows<Real>(const Tensor<Real>&);                                                \
  template struct ModelOutput<Real>;                                                                         \
  template class MgpModel<Real>;

MGP_INSTANTIATE_HEADS(float)
MGP_INSTANTIATE_HEADS(double)

}  // namespace mgp::model
