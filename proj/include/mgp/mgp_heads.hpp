#pragma once

// A3 token aggregation and the per-granularity classification heads, plus the
// full model that ties them to the backbone.

#include <array>
#include <optional>

#include "mgp/backbone.hpp"

namespace mgp::model {

template <typename Real>
struct A3Output {
  Var<Real> Y;      // [.., T, D] aggregated slot features
  Var<Real> masks;  // [.., N+1, T]; column i is the attention mask of slot i
};

// "heads.char." etc.
std::string head_prefix(Granularity g);

std::vector<std::pair<std::string, Shape>> head_param_shapes(const ModelConfig& cfg, Granularity g);

template <typename Real>
ParamSet<Real> init_head_params(const ModelConfig& cfg, Granularity g, std::uint64_t seed);

// masks = softmax over tokens of z_L alpha; Y = masks^T (z_L U).
template <typename Real>
A3Output<Real> a3_forward(const Var<Real>& z_L, const ParamSet<Real>& params, const std::string& prefix);

// Y [.., T, D] -> raw logits [.., T, K] = Y W^T.
template <typename Real>
Var<Real> classify(const Var<Real>& Y, const ParamSet<Real>& params, const std::string& prefix);

template <typename Real>
struct HeadOutput {
  Var<Real> logits;  // [B, T, K]
  Var<Real> masks;   // [B, N+1, T]
};

template <typename Real>
struct ModelOutput {
  Var<Real> z_L;
  std::array<std::optional<HeadOutput<Real>>, 3> heads;

  const HeadOutput<Real>& head(Granularity g) const;
};

// Runs every enabled branch on the same z_L.
template <typename Real>
std::array<std::optional<HeadOutput<Real>>, 3> mgp_forward(const Var<Real>& z_L, const ParamSet<Real>& params,
                                                           const ModelConfig& cfg);

// masks [B, N+1, T] -> [B, T, N+1], one row-stochastic row per slot.
template <typename Real>
Tensor<Real> mask_rows(const Tensor<Real>& masks);

template <typename Real>
class MgpModel {
 public:
  // Fresh initialisation from `seed`.
  MgpModel(ModelConfig cfg, std::uint64_t seed);
  // Adopts existing parameters; names and shapes must match the config exactly.
  MgpModel(ModelConfig cfg, ParamSet<Real> params);

  const ModelConfig& config() const { return cfg_; }
  ParamSet<Real>& params() { return params_; }
  const ParamSet<Real>& params() const { return params_; }

  // images [B, H, W, C].
  ModelOutput<Real> forward(const Tensor<Real>& images) const;

  // Expected (name, shape) list for this config, sorted by name.
  static std::vector<std::pair<std::string, Shape>> param_shapes(const ModelConfig& cfg);

  template <typename Other>
  MgpModel<Other> cast() const {
    ParamSet<Other> out;
    for (const auto& [name, v] : params_) out.emplace(name, Var<Other>::leaf(v.value().template cast<Other>(), true));
    return MgpModel<Other>(cfg_, std::move(out));
  }

 private:
  ModelConfig cfg_;
  ParamSet<Real> params_;
};

}  // namespace mgp::model
