#include <cmath>
#include <fstream>
#include <set>

#include <spdlog/spdlog.h>

#include "mgp/errors.hpp"
#include "mgp/trainer.hpp"

namespace mgp::train {

namespace {

constexpr std::size_t kBpeSeedSize = 3 + 36;
constexpr std::size_t kWordPieceSeedSize = 3 + 2 * 36;

std::size_t index(Granularity g) { return static_cast<std::size_t>(g); }

}  // namespace

void TrainConfig::validate() const {
  ModelConfig::from_preset(preset);
  if (batch_size == 0) throw ConfigError("batch_size must be positive");
  if (epochs == 0) throw ConfigError("epochs must be positive");
  if (!(lr >= 0.0) || !std::isfinite(lr)) throw ConfigError("lr must be finite and >= 0");
  if (!(rho >= 0.0 && rho < 1.0)) throw ConfigError("rho must lie in [0, 1)");
  if (!(eps > 0.0)) throw ConfigError("eps must be positive");
  if (!(clip_norm >= 0.0)) throw ConfigError("clip_norm must be >= 0");
  for (double w : loss_weights) {
    if (!(w >= 0.0) || !std::isfinite(w)) throw ConfigError("loss weights must be finite and >= 0");
  }
  if (!heads[0]) throw ConfigError("the char head must be enabled");
  if (heads[index(Granularity::kBpe)] && bpe_vocab < kBpeSeedSize) {
    throw ConfigError("bpe_vocab must be at least " + std::to_string(kBpeSeedSize));
  }
  if (heads[index(Granularity::kWordPiece)] && wp_vocab < kWordPieceSeedSize) {
    throw ConfigError("wp_vocab must be at least " + std::to_string(kWordPieceSeedSize));
  }
}

nlohmann::json TrainConfig::to_json() const {
  return {{"preset", preset},
          {"batch_size", batch_size},
          {"epochs", epochs},
          {"lr", lr},
          {"rho", rho},
          {"eps", eps},
          {"schedule", schedule == Schedule::kCosine ? "cosine" : "constant"},
          {"clip_norm", clip_norm},
          {"loss_weights", {{"char", loss_weights[0]}, {"bpe", loss_weights[1]}, {"wp", loss_weights[2]}}},
          {"ignore_pad", ignore_pad},
          {"seed", seed},
          {"heads", model::head_list_string(heads)},
          {"bpe_vocab", bpe_vocab},
          {"wp_vocab", wp_vocab},
          {"log_every", log_every}};
}

TrainConfig TrainConfig::from_json(const nlohmann::json& j) {
  if (!j.is_object()) throw ConfigError("train config must be a JSON object");
  static const std::set<std::string> known{"preset", "batch_size", "epochs",     "lr",   "rho",
                                           "eps",    "schedule",   "clip_norm",  "loss_weights",
                                           "ignore_pad", "seed",   "heads",      "bpe_vocab", "wp_vocab",
                                           "log_every"};
  for (const auto& [key, value] : j.items()) {
    if (!known.count(key)) throw ConfigError("unknown train config key '" + key + "'");
  }
  TrainConfig c;
  try {
    if (j.contains("preset")) c.preset = j["preset"].get<std::string>();
    if (j.contains("batch_size")) c.batch_size = j["batch_size"].get<std::size_t>();
    if (j.contains("epochs")) c.epochs = j["epochs"].get<std::size_t>();
    if (j.contains("lr")) c.lr = j["lr"].get<double>();
    if (j.contains("rho")) c.rho = j["rho"].get<double>();
    if (j.contains("eps")) c.eps = j["eps"].get<double>();
    if (j.contains("schedule")) {
      const auto s = j["schedule"].get<std::string>();
      if (s == "cosine") c.schedule = Schedule::kCosine;
      else if (s == "constant") c.schedule = Schedule::kConstant;
      else throw ConfigError("unknown schedule '" + s + "'");
    }
    if (j.contains("clip_norm")) c.clip_norm = j["clip_norm"].get<double>();
    if (j.contains("loss_weights")) {
      for (const auto& [key, value] : j["loss_weights"].items()) {
        c.loss_weights[index(tok::granularity_from_string(key))] = value.get<double>();
      }
    }
    if (j.contains("ignore_pad")) c.ignore_pad = j["ignore_pad"].get<bool>();
    if (j.contains("seed")) c.seed = j["seed"].get<std::uint64_t>();
    if (j.contains("heads")) c.heads = model::parse_head_list(j["heads"].get<std::string>());
    if (j.contains("bpe_vocab")) c.bpe_vocab = j["bpe_vocab"].get<std::size_t>();
    if (j.contains("wp_vocab")) c.wp_vocab = j["wp_vocab"].get<std::size_t>();
    if (j.contains("log_every")) c.log_every = j["log_every"].get<std::size_t>();
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("train config: ") + e.what());
  }
  c.validate();
  return c;
}

TrainConfig TrainConfig::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path.string());
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(path.string() + ": " + e.what());
  }
  return from_json(j);
}

const tok::Tokenizer& TokenizerSet::at(Granularity g) const {
  const auto& c = codecs[index(g)];
  if (!c) throw ConfigError("no " + std::string(tok::to_string(g)) + " tokenizer loaded");
  return *c;
}

TokenizerSet train_tokenizers(const std::vector<std::string>& labels, const TrainConfig& cfg) {
  TokenizerSet set;
  set.codecs[index(Granularity::kChar)] = tok::Tokenizer::characters();
  if (cfg.heads[index(Granularity::kBpe)]) {
    set.codecs[index(Granularity::kBpe)] = tok::Tokenizer::bpe(tok::bpe_train(labels, cfg.bpe_vocab - kBpeSeedSize));
  }
  if (cfg.heads[index(Granularity::kWordPiece)]) {
    set.codecs[index(Granularity::kWordPiece)] = tok::Tokenizer::wordpiece(tok::wordpiece_train(labels, cfg.wp_vocab));
  }
  return set;
}

ModelConfig model_config_for(const TrainConfig& cfg, const TokenizerSet& tokenizers) {
  ModelConfig m = ModelConfig::from_preset(cfg.preset);
  m.enabled = cfg.heads;
  for (auto g : model::kAllGranularities) {
    // The loss masks pad by id 0.
    if (tokenizers.has(g) && tokenizers.at(g).vocab().pad_id() != 0) {
      throw ConfigError(std::string(tok::to_string(g)) + " vocabulary must use pad id 0");
    }
  }
  if (cfg.heads[index(Granularity::kBpe)]) m.K_bpe = tokenizers.at(Granularity::kBpe).vocab().size();
  if (cfg.heads[index(Granularity::kWordPiece)]) m.K_wp = tokenizers.at(Granularity::kWordPiece).vocab().size();
  m.validate();
  return m;
}

Labels prepare_labels(std::string_view word, const TokenizerSet& tokenizers, std::size_t T) {
  tok::require_alphabet(word);
  Labels out;
  for (auto g : model::kAllGranularities) {
    if (tokenizers.has(g)) out[index(g)] = tokenizers.at(g).encode(word, T);
  }
  return out;
}

EncodedDataset encode_dataset(const data::Dataset& dataset, const TokenizerSet& tokenizers, std::size_t T) {
  EncodedDataset enc;
  for (std::size_t i = 0; i < dataset.size(); ++i) {
    try {
      enc.labels.push_back(prepare_labels(dataset.label(i), tokenizers, T));
      enc.indices.push_back(i);
    } catch (const Error& e) {
      spdlog::warn("skipping sample {} ('{}'): {}", i, dataset.label(i), e.what());
    }
  }
  return enc;
}

}  // namespace mgp::train
