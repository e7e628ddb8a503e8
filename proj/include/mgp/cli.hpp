#pragma once

// Command implementations behind the mgpstr tool. Each command writes its
// machine-readable output to `out` and reports failures by throwing
// mgp::Error subclasses, which exit_code() maps onto process exit codes.

#include <cstdint>
#include <exception>
#include <filesystem>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include "mgp/trainer.hpp"

namespace mgp::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitFailure = 1;
inline constexpr int kExitIo = 2;
inline constexpr int kExitInvalidInput = 3;
inline constexpr int kExitNumeric = 4;

int exit_code(const std::exception& e);

struct TokenizerTrainArgs {
  std::filesystem::path corpus;
  std::string granularity = "bpe";
  std::string size = "medium";  // small | medium | large | integer vocabulary size
  std::filesystem::path out;
};
// Named sizes are 96 / 128 / 256 entries.
std::size_t parse_vocab_size(const std::string& size);
void tokenizer_train(const TokenizerTrainArgs& args, std::ostream& out);

struct SynthArgs {
  std::optional<std::filesystem::path> lexicon;
  std::size_t n_train = 2000;
  std::size_t n_test = 500;
  std::uint64_t seed = 0;
  bool augment = true;
  std::filesystem::path out;
};
// Writes out/train, out/test and out/lexicon.tsv.
void synth(const SynthArgs& args, std::ostream& out);

struct TrainArgs {
  std::optional<std::filesystem::path> config;
  std::filesystem::path data;
  std::optional<std::filesystem::path> eval_data;
  std::filesystem::path out;
  std::optional<std::string> heads;
  std::optional<std::size_t> epochs;
  bool resume = false;
};
// MGP_SEED, when set, overrides the config seed.
train::TrainConfig resolve_train_config(const TrainArgs& args);
void train(const TrainArgs& args, std::ostream& out);

struct EvalArgs {
  std::filesystem::path checkpoint;
  std::vector<std::filesystem::path> data;
  std::string fusion = "both";
  std::optional<std::filesystem::path> json_out;
};
// Prints the JSON report, then a human-readable table.
void eval(const EvalArgs& args, std::ostream& out);

struct PredictArgs {
  std::filesystem::path checkpoint;
  std::filesystem::path image;
  bool explain = false;
  std::string fusion = "cumprod";
  bool json = false;
};
void predict(const PredictArgs& args, std::ostream& out);

struct DumpAttentionArgs {
  std::filesystem::path checkpoint;
  std::filesystem::path image;
  std::string head = "char";
  std::filesystem::path out;
};
// Mask rows [T, N+1] of one head for a single [H, W, C] image.
Tensor<float> attention_rows(const model::MgpModel<float>& model, const Tensor<float>& image, model::Granularity g);
// Writes slot_00.pgm .. slot_{T-1}.pgm, each the patch grid of one mask row
// without the class token, min-max scaled to 0-255.
void dump_attention(const DumpAttentionArgs& args, std::ostream& out);

struct BenchArgs {
  std::filesystem::path checkpoint;
  std::size_t n = 20;
};
void bench(const BenchArgs& args, std::ostream& out);

// Model + tokenizers; any load failure surfaces as IoError.
train::LoadedModel load_model(const std::filesystem::path& checkpoint);
// A model-sized PPM; other sizes are refused rather than rescaled.
Tensor<float> load_probe_image(const std::filesystem::path& path, const model::ModelConfig& cfg);

}  // namespace mgp::cli
