#pragma once

// Multi-task training of the backbone plus the three heads: label
// preparation, Adadelta with a cosine schedule, the binary checkpoint format,
// evaluation and the epoch loop with resume.

#include <array>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"
#include "mgp/fusion.hpp"
#include "mgp/mgp_heads.hpp"
#include "mgp/synthdata.hpp"
#include "mgp/tokenizers.hpp"

namespace mgp::train {

using model::Granularity;
using model::MgpModel;
using model::ModelConfig;

enum class Schedule { kCosine, kConstant };

struct TrainConfig {
  std::string preset = "micro";
  std::size_t batch_size = 32;
  std::size_t epochs = 10;
  double lr = 1.0;
  double rho = 0.95;
  double eps = 1e-6;
  Schedule schedule = Schedule::kCosine;
  double clip_norm = 10.0;  // 0 disables clipping
  std::array<double, 3> loss_weights{1.0, 1.0, 1.0};
  // Exclude pad targets from the loss (mean over valid tokens instead of all T).
  bool ignore_pad = false;
  std::uint64_t seed = 0;
  std::array<bool, 3> heads{true, true, true};
  // Target vocabulary sizes when tokenizers are learned from the train labels.
  // BPE: 3 specials + 36 characters + 256 merges. WordPiece training may stop
  // short of its target on a small lexicon.
  std::size_t bpe_vocab = 295;
  std::size_t wp_vocab = 512;
  // Per-step records in metrics.jsonl every this many steps; 0 for epoch records only.
  std::size_t log_every = 0;

  // Throws ConfigError.
  void validate() const;
  nlohmann::json to_json() const;
  // Missing keys keep their defaults; unknown keys are rejected.
  static TrainConfig from_json(const nlohmann::json& j);
  static TrainConfig load(const std::filesystem::path& path);
};

// One codec per enabled granularity.
struct TokenizerSet {
  std::array<std::optional<tok::Tokenizer>, 3> codecs;

  const tok::Tokenizer& at(Granularity g) const;
  bool has(Granularity g) const { return codecs[static_cast<std::size_t>(g)].has_value(); }
};

// Char codec always; BPE / WordPiece learned from `labels` (the train label
// multiset) for each enabled subword head.
TokenizerSet train_tokenizers(const std::vector<std::string>& labels, const TrainConfig& cfg);

// Model config for `cfg` with subword vocabulary sizes taken from `tokenizers`.
ModelConfig model_config_for(const TrainConfig& cfg, const TokenizerSet& tokenizers);

using Labels = std::array<std::optional<tok::TokenSequence>, 3>;

// Encodes `word` with every codec present in `tokenizers`. Throws on codec failure.
Labels prepare_labels(std::string_view word, const TokenizerSet& tokenizers, std::size_t T);

// Encodes every label of `dataset`; samples that fail are skipped with a
// warning. Returns the kept indices and their labels.
struct EncodedDataset {
  std::vector<std::size_t> indices;
  std::vector<Labels> labels;
};
EncodedDataset encode_dataset(const data::Dataset& dataset, const TokenizerSet& tokenizers, std::size_t T);

class Adadelta {
 public:
  Adadelta(double rho, double eps) : rho_(rho), eps_(eps) {}

  // p -= lr * sqrt(E[dx^2] + eps) / sqrt(E[g^2] + eps) * g for every parameter with a gradient.
  void step(ParamSet<float>& params, double lr);

  // Accumulators as "sq_avg.<name>" / "acc_delta.<name>" tensors.
  std::map<std::string, Tensor<float>> state() const;
  void load_state(const std::map<std::string, Tensor<float>>& state);

 private:
  double rho_, eps_;
  std::map<std::string, Tensor<float>> sq_avg_, acc_delta_;
};

// lr at step t of `total` steps.
double scheduled_lr(const TrainConfig& cfg, std::size_t t, std::size_t total);

// Scales gradients so their global L2 norm is at most max_norm; returns the norm before scaling.
double clip_grad_norm(ParamSet<float>& params, double max_norm);

struct StepResult {
  std::array<std::optional<double>, 3> losses;  // per enabled head
  double total = 0.0;
  double grad_norm = 0.0;
  std::array<Tensor<float>, 3> logits;  // [B, T, K] per enabled head, before the update
};

// One forward / backward / update on images [B, H, W, C] with matching labels.
// Throws NumericError on a non-finite loss before touching the parameters.
StepResult train_step(MgpModel<float>& model, Adadelta& opt, const Tensor<float>& images,
                      const std::vector<Labels>& labels, const TrainConfig& cfg, double lr);

// Checkpoint: "MGPC", u32 version, u32 tensor count, then per tensor a u16
// name length + name, u8 rank, u64 dims, f32 payload (all little-endian),
// then u32 metadata count and (u16 key, u32 value) string pairs.
inline constexpr std::uint32_t kCheckpointVersion = 1;

struct Checkpoint {
  std::map<std::string, Tensor<float>> tensors;
  std::map<std::string, std::string> metadata;
};

void write_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt);
// Throws FormatError naming the byte offset of the first problem.
Checkpoint read_checkpoint(const std::filesystem::path& path);

// Writes the model tensors, its config and the tokenizer sidecars (placed
// next to the checkpoint, referenced by relative path).
void save_checkpoint(const std::filesystem::path& path, const MgpModel<float>& model, const TokenizerSet& tokenizers);

struct LoadedModel {
  MgpModel<float> model;
  TokenizerSet tokenizers;
};
LoadedModel load_checkpoint(const std::filesystem::path& path);

// Batched inference over images [B, H, W, C]: result[b] holds one unscored
// prediction per enabled head, in granularity order.
std::vector<std::vector<fusion::Prediction>> predict(const MgpModel<float>& model, const TokenizerSet& tokenizers,
                                                     const Tensor<float>& images);

// Accuracy bookkeeping shared by evaluation and the training loop.
struct EvalReport {
  std::size_t samples = 0;
  std::array<std::optional<double>, 3> head_accuracy;
  double fused_mean = 0.0;
  double fused_cumprod = 0.0;
  double upper_bound = 0.0;
  double ms_per_image = 0.0;

  nlohmann::json to_json() const;
};

class EvalAccumulator {
 public:
  // preds: one unscored prediction per enabled head.
  void add(std::vector<fusion::Prediction> preds, std::string_view truth);
  EvalReport report() const;

 private:
  std::size_t n_ = 0;
  std::array<std::size_t, 3> head_hits_{};
  std::array<bool, 3> seen_{};
  std::size_t mean_hits_ = 0, cumprod_hits_ = 0, bound_hits_ = 0;
};

// Throws ConfigError on an empty dataset.
EvalReport evaluate(const MgpModel<float>& model, const TokenizerSet& tokenizers, const data::Dataset& dataset,
                    std::size_t batch_size = 64);

struct TrainOptions {
  std::filesystem::path out_dir;
  bool resume = false;
  // Stop after this many epochs of this invocation (for interrupt / resume tests).
  std::optional<std::size_t> max_epochs_this_run;
  // Evaluated after each epoch; the train set itself when absent.
  const data::Dataset* eval_set = nullptr;
  // Drop "wall_time" from metrics records (bit-comparable files).
  bool omit_wall_time = false;
};

struct TrainSummary {
  std::size_t epochs_completed = 0;
  std::size_t steps = 0;
  EvalReport last_eval;
};

// Trains on `train`, writing last.mgpc, optimizer.mgpc, train_state.json and
// metrics.jsonl into out_dir after every epoch. Tokenizers are learned from
// the train labels unless `tokenizers` is given.
TrainSummary train(const TrainConfig& cfg, const data::Dataset& train, const TrainOptions& options,
                   std::optional<TokenizerSet> tokenizers = std::nullopt);

}  // namespace mgp::train
