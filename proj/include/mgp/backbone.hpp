#pragma once

// ViT encoder: patch embedding with a class token and learned 1D position
// embeddings, followed by pre-norm transformer blocks.

#include <array>
#include <cstdint>
#include <string>
#include <string_view>

#include "json.hpp"
#include "mgp/autograd.hpp"
#include "mgp/tensor.hpp"
#include "mgp/tokenizers.hpp"

namespace mgp::model {

using tok::Granularity;

inline constexpr std::array<Granularity, 3> kAllGranularities{Granularity::kChar, Granularity::kBpe,
                                                              Granularity::kWordPiece};

struct ModelConfig {
  std::string preset = "micro";
  std::size_t H = 32;
  std::size_t W = 128;
  std::size_t C = 3;
  std::size_t P = 4;
  std::size_t D = 96;
  std::size_t L = 4;
  std::size_t num_heads = 3;
  std::size_t T = 27;
  std::size_t K_char = 38;
  std::size_t K_bpe = 0;
  std::size_t K_wp = 0;
  // Which prediction branches exist; char-only is the vision-only variant.
  std::array<bool, 3> enabled{true, true, true};

  // Known names: base, small, tiny, micro. Subword K stays 0 until a
  // tokenizer is attached.
  static ModelConfig from_preset(std::string_view name);

  std::size_t num_patches() const { return (H / P) * (W / P); }
  std::size_t seq_len() const { return num_patches() + 1; }
  std::size_t patch_dim() const { return P * P * C; }
  std::size_t mlp_dim() const { return 4 * D; }
  std::size_t vocab_size(Granularity g) const;
  bool has_head(Granularity g) const { return enabled[static_cast<std::size_t>(g)]; }

  // Throws ConfigError on any violated invariant.
  void validate() const;

  nlohmann::json to_json() const;
  static ModelConfig from_json(const nlohmann::json& j);
};

// "char,bpe" style list -> enabled flags. Char must be present.
std::array<bool, 3> parse_head_list(std::string_view list);
std::string head_list_string(const std::array<bool, 3>& enabled);

// Closed-form trainable parameter counts.
std::size_t backbone_param_count(const ModelConfig& cfg);
std::size_t head_param_count(const ModelConfig& cfg, std::size_t K);
std::size_t model_param_count(const ModelConfig& cfg);

// [H, W, C] -> [N, P*P*C] or [B, H, W, C] -> [B, N, P*P*C]; patches in
// row-major order, each flattened row-major with channels last.
template <typename Real>
Tensor<Real> patchify(const Tensor<Real>& images, std::size_t P);

// Deterministic per-parameter stream: the values depend only on (seed, name),
// never on which other parameters exist or their creation order.
std::uint64_t param_stream_seed(std::uint64_t seed, std::string_view name);
// Normal(0, std) truncated to +-2 std, by rejection.
template <typename Real>
Tensor<Real> trunc_normal(const Shape& shape, double std, std::uint64_t seed, std::string_view name);

template <typename Real>
ParamSet<Real> init_backbone_params(const ModelConfig& cfg, std::uint64_t seed);

// Every name / shape the backbone expects; checked against loaded checkpoints.
std::vector<std::pair<std::string, Shape>> backbone_param_shapes(const ModelConfig& cfg);

std::string block_prefix(std::size_t layer);

// patches [.., N, P*P*C] -> z0 [.., N+1, D].
template <typename Real>
Var<Real> embed(const Var<Real>& patches, const ParamSet<Real>& params);

// One pre-norm block: z' = MSA(LN(z)) + z; out = MLP(LN(z')) + z'.
template <typename Real>
Var<Real> encoder_block(const Var<Real>& z, const ParamSet<Real>& params, const std::string& prefix,
                        std::size_t num_heads);

template <typename Real>
Var<Real> encode(const Var<Real>& z0, const ParamSet<Real>& params, const ModelConfig& cfg);

// images [B, H, W, C] -> z_L [B, N+1, D].
template <typename Real>
Var<Real> backbone_forward(const Tensor<Real>& images, const ParamSet<Real>& params, const ModelConfig& cfg);

// Looks up a parameter, throwing ConfigError naming it when absent.
template <typename Real>
const Var<Real>& param(const ParamSet<Real>& params, const std::string& name);

}  // namespace mgp::model
