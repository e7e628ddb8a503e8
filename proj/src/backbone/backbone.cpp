#include "mgp/backbone.hpp"

#include <cmath>
#include <cstdio>

#include "mgp/errors.hpp"
#include "mgp/ops.hpp"
#include "mgp/random.hpp"

namespace mgp::model {

namespace {

std::size_t head_index(Granularity g) { return static_cast<std::size_t>(g); }

}  // namespace

ModelConfig ModelConfig::from_preset(std::string_view name) {
  ModelConfig cfg;
  cfg.preset = std::string(name);
  if (name == "base") {
    cfg.D = 768, cfg.L = 12, cfg.num_heads = 12;
  } else if (name == "small") {
    cfg.D = 384, cfg.L = 12, cfg.num_heads = 6;
  } else if (name == "tiny") {
    cfg.D = 192, cfg.L = 12, cfg.num_heads = 3;
  } else if (name == "micro") {
    cfg.D = 96, cfg.L = 4, cfg.num_heads = 3;
  } else {
    throw ConfigError("unknown preset '" + std::string(name) + "'");
  }
  return cfg;
}

std::size_t ModelConfig::vocab_size(Granularity g) const {
  switch (g) {
    case Granularity::kChar: return K_char;
    case Granularity::kBpe: return K_bpe;
    case Granularity::kWordPiece: return K_wp;
  }
  return 0;
}

void ModelConfig::validate() const {
  auto fail = [](const std::string& msg) { throw ConfigError("model config: " + msg); };
  if (!H || !W || !C || !P || !D || !num_heads || !T) fail("extents must be positive");
  if (H % P || W % P) fail("image " + std::to_string(H) + "x" + std::to_string(W) + " not divisible by patch " + std::to_string(P));
  if (D % num_heads) fail("D=" + std::to_string(D) + " not divisible by heads=" + std::to_string(num_heads));
  if (K_char != 38) fail("K_char must be 38");
  if (!enabled[0]) fail("the character head is always present");
  if (enabled[1] && K_bpe < 3) fail("BPE head enabled without a BPE vocabulary");
  if (enabled[2] && K_wp < 3) fail("WordPiece head enabled without a WordPiece vocabulary");
}

nlohmann::json ModelConfig::to_json() const {
  return {{"preset", preset}, {"H", H},     {"W", W},         {"C", C},         {"P", P},
          {"D", D},           {"L", L},     {"heads", num_heads}, {"T", T},     {"K_char", K_char},
          {"K_bpe", K_bpe},   {"K_wp", K_wp}, {"enabled", head_list_string(enabled)}};
}

ModelConfig ModelConfig::from_json(const nlohmann::json& j) {
  ModelConfig cfg = j.contains("preset") ? from_preset(j.at("preset").get<std::string>()) : ModelConfig{};
  try {
    auto get = [&](const char* key, std::size_t& slot) {
      if (j.contains(key)) slot = j.at(key).get<std::size_t>();
    };
    get("H", cfg.H);
    get("W", cfg.W);
    get("C", cfg.C);
    get("P", cfg.P);
    get("D", cfg.D);
    get("L", cfg.L);
    get("heads", cfg.num_heads);
    get("T", cfg.T);
    get("K_char", cfg.K_char);
    get("K_bpe", cfg.K_bpe);
    get("K_wp", cfg.K_wp);
    if (j.contains("enabled")) cfg.enabled = parse_head_list(j.at("enabled").get<std::string>());
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("model config json: ") + e.what());
  }
  return cfg;
}

std::array<bool, 3> parse_head_list(std::string_view list) {
  std::array<bool, 3> on{false, false, false};
  std::size_t start = 0;
  while (start <= list.size()) {
    std::size_t end = list.find(',', start);
    if (end == std::string_view::npos) end = list.size();
    auto item = list.substr(start, end - start);
    if (item.empty()) throw ConfigError("empty entry in head list '" + std::string(list) + "'");
    on[head_index(tok::granularity_from_string(item))] = true;
    start = end + 1;
  }
  if (!on[0]) throw ConfigError("head list must include char");
  return on;
}

std::string head_list_string(const std::array<bool, 3>& enabled) {
  std::string out;
  for (auto g : kAllGranularities) {
    if (!enabled[head_index(g)]) continue;
    if (!out.empty()) out += ',';
    out += tok::to_string(g);
  }
  return out;
}

std::size_t backbone_param_count(const ModelConfig& cfg) {
  const std::size_t D = cfg.D;
  const std::size_t per_block = 2 * 2 * D            // two layer norms
                                + 4 * (D * D + D)    // q, k, v, out
                                + (D * 4 * D + 4 * D) + (4 * D * D + D);  // mlp
  return cfg.patch_dim() * D + D + cfg.seq_len() * D + D + cfg.L * per_block;
}

std::size_t head_param_count(const ModelConfig& cfg, std::size_t K) {
  const std::size_t D = cfg.D, T = cfg.T;
  return D * T + D * D + K * D;
}

std::size_t model_param_count(const ModelConfig& cfg) {
  std::size_t n = backbone_param_count(cfg);
  for (auto g : kAllGranularities) {
    if (cfg.has_head(g)) n += head_param_count(cfg, cfg.vocab_size(g));
  }
  return n;
}

template <typename Real>
Tensor<Real> patchify(const Tensor<Real>& images, std::size_t P) {
  const bool batched = images.rank() == 4;
  if (images.rank() != 3 && !batched) throw DimensionError("patchify expects [H,W,C] or [B,H,W,C], got " + shape_str(images.shape()));
  const std::size_t B = batched ? images.dim(0) : 1;
  const std::size_t H = images.dim(batched ? 1 : 0), W = images.dim(batched ? 2 : 1), C = images.dim(batched ? 3 : 2);
  if (P == 0 || H % P || W % P) {
    throw DimensionError("image " + shape_str(images.shape()) + " not divisible into " + std::to_string(P) + "x" +
                         std::to_string(P) + " patches");
  }
  const std::size_t gh = H / P, gw = W / P, N = gh * gw, pd = P * P * C;
  Tensor<Real> out(batched ? Shape{B, N, pd} : Shape{N, pd});
  const Real* src = images.ptr();
  Real* dst = out.ptr();
  for (std::size_t b = 0; b < B; ++b) {
    for (std::size_t py = 0; py < gh; ++py) {
      for (std::size_t px = 0; px < gw; ++px) {
        Real* row = dst + (b * N + py * gw + px) * pd;
        for (std::size_t y = 0; y < P; ++y) {
          const Real* line = src + ((b * H + py * P + y) * W + px * P) * C;
          std::copy(line, line + P * C, row + y * P * C);
        }
      }
    }
  }
  return out;
}

std::uint64_t param_stream_seed(std::uint64_t seed, std::string_view name) { return mix_seed(seed, name); }

template <typename Real>
Tensor<Real> trunc_normal(const Shape& shape, double std, std::uint64_t seed, std::string_view name) {
  Rng rng(param_stream_seed(seed, name));
  Tensor<Real> t(shape);
  for (Real& v : t.data()) {
    double x;
    do {
      x = rng.normal();
    } while (std::abs(x) > 2.0);
    v = static_cast<Real>(x * std);
  }
  return t;
}

std::string block_prefix(std::size_t layer) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "blocks.%02zu.", layer);
  return buf;
}

std::vector<std::pair<std::string, Shape>> backbone_param_shapes(const ModelConfig& cfg) {
  const std::size_t D = cfg.D;
  std::vector<std::pair<std::string, Shape>> out{
      {"embed.patch.weight", {cfg.patch_dim(), D}},
      {"embed.patch.bias", {D}},
      {"embed.pos", {cfg.seq_len(), D}},
      {"embed.cls", {1, D}},
  };
  for (std::size_t l = 0; l < cfg.L; ++l) {
    const std::string p = block_prefix(l);
    for (const char* ln : {"ln1", "ln2"}) {
      out.push_back({p + ln + ".gamma", {D}});
      out.push_back({p + ln + ".beta", {D}});
    }
    for (const char* proj : {"q", "k", "v", "out"}) {
      out.push_back({p + "attn." + proj + ".weight", {D, D}});
      out.push_back({p + "attn." + proj + ".bias", {D}});
    }
    out.push_back({p + "mlp.fc1.weight", {D, cfg.mlp_dim()}});
    out.push_back({p + "mlp.fc1.bias", {cfg.mlp_dim()}});
    out.push_back({p + "mlp.fc2.weight", {cfg.mlp_dim(), D}});
    out.push_back({p + "mlp.fc2.bias", {D}});
  }
  return out;
}

template <typename Real>
ParamSet<Real> init_backbone_params(const ModelConfig& cfg, std::uint64_t seed) {
  ParamSet<Real> params;
  for (auto& [name, shape] : backbone_param_shapes(cfg)) {
    Tensor<Real> value(shape);
    if (name.ends_with(".gamma")) {
      value.fill(Real{1});
    } else if (name.ends_with(".weight") || name == "embed.pos" || name == "embed.cls") {
      value = trunc_normal<Real>(shape, 0.02, seed, name);
    }
    params.emplace(name, Var<Real>::leaf(std::move(value), true));
  }
  return params;
}

template <typename Real>
const Var<Real>& param(const ParamSet<Real>& params, const std::string& name) {
  auto it = params.find(name);
  if (it == params.end()) throw ConfigError("missing parameter '" + name + "'");
  return it->second;
}

template <typename Real>
Var<Real> embed(const Var<Real>& patches, const ParamSet<Real>& params) {
  auto x = nn::linear(patches, param(params, "embed.patch.weight"), param(params, "embed.patch.bias"));
  x = nn::prepend_row(x, param(params, "embed.cls"));
  return nn::add_broadcast(x, param(params, "embed.pos"));
}

template <typename Real>
Var<Real> encoder_block(const Var<Real>& z, const ParamSet<Real>& params, const std::string& prefix,
                        std::size_t num_heads) {
  auto p = [&](const std::string& name) -> const Var<Real>& { return param(params, prefix + name); };
  nn::AttentionParams<Real> attn{p("attn.q.weight"), p("attn.q.bias"), p("attn.k.weight"),  p("attn.k.bias"),
                                 p("attn.v.weight"), p("attn.v.bias"), p("attn.out.weight"), p("attn.out.bias")};
  auto h = nn::layer_norm(z, p("ln1.gamma"), p("ln1.beta"));
  auto z1 = nn::add(z, nn::multi_head_self_attention(h, attn, num_heads));
  h = nn::layer_norm(z1, p("ln2.gamma"), p("ln2.beta"));
  h = nn::gelu(nn::linear(h, p("mlp.fc1.weight"), p("mlp.fc1.bias")));
  return nn::add(z1, nn::linear(h, p("mlp.fc2.weight"), p("mlp.fc2.bias")));
}

template <typename Real>
Var<Real> encode(const Var<Real>& z0, const ParamSet<Real>& params, const ModelConfig& cfg) {
  Var<Real> z = z0;
  for (std::size_t l = 0; l < cfg.L; ++l) z = encoder_block(z, params, block_prefix(l), cfg.num_heads);
  return z;
}

template <typename Real>
Var<Real> backbone_forward(const Tensor<Real>& images, const ParamSet<Real>& params, const ModelConfig& cfg) {
  if (images.rank() != 4 || images.dim(1) != cfg.H || images.dim(2) != cfg.W || images.dim(3) != cfg.C) {
    throw DimensionError("expected images [B," + std::to_string(cfg.H) + "," + std::to_string(cfg.W) + "," +
                         std::to_string(cfg.C) + "], got " + shape_str(images.shape()));
  }
  auto patches = Var<Real>::leaf(patchify(images, cfg.P), false);
  return encode(embed(patches, params), params, cfg);
}

#define MGP_INSTANTIATE_BACKBONE(Real)                                                                   \
  template Tensor<Real> patchify<Real>(const Tensor<Real>&, std::size_t);                               \
  template Tensor<Real> trunc_normal<Real>(const Shape&, double, std::uint64_t, std::string_view);      \
  template ParamSet<Real> init_backbone_params<Real>(const ModelConfig&, std::uint64_t);               \
  template const Var<Real>& param<Real>(const ParamSet<Real>&, const std::string&);                    \
  template Var<Real> embed<Real>(const Var<Real>&, const ParamSet<Real>&);                             \
  template Var<Real> encoder_block<Real>(const Var<Real>&, const ParamSet<Real>&, const std::string&,  \
                                         std::size_t);                                                  \
  template Var<Real> encode<Real>(const Var<Real>&, const ParamSet<Real>&, const ModelConfig&);        \
  template Var<Real> backbone_forward<Real>(const Tensor<Real>&, const ParamSet<Real>&, const ModelConfig&);

MGP_INSTANTIATE_BACKBONE(float)
MGP_INSTANTIATE_BACKBONE(double)

}  // namespace mgp::model
