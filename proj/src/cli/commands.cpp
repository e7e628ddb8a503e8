#include <algorithm>
#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <iomanip>
#include <sstream>

#include <spdlog/spdlog.h>

#include "mgp/cli.hpp"
#include "mgp/errors.hpp"

namespace mgp::cli {

namespace {

using model::Granularity;

std::size_t gi(Granularity g) { return static_cast<std::size_t>(g); }

std::vector<std::string> read_corpus(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open corpus " + path.string());
  std::vector<std::string> words;
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    try {
      tok::require_alphabet(line);
    } catch (const AlphabetError& e) {
      throw CorpusError(path.string() + ": line " + std::to_string(words.size() + 1) + ": " + e.what());
    }
    words.push_back(line);
  }
  return words;
}

std::string fixed(double v, int digits = 4) {
  std::ostringstream s;
  s << std::fixed << std::setprecision(digits) << v;
  return s.str();
}

// Each token of a prediction decoded on its own, space separated.
std::string segmentation(const fusion::Prediction& p, const tok::Vocabulary& vocab) {
  if (p.granularity == Granularity::kChar) return p.text;
  std::string out;
  for (auto id : p.ids) {
    if (id == vocab.eos_id()) break;
    const std::string piece = tok::decode(vocab, std::span<const tok::TokenId>(&id, 1));
    if (piece.empty()) continue;
    if (!out.empty()) out += ' ';
    out += piece;
  }
  return out;
}

std::vector<fusion::Mode> fusion_modes(const std::string& name) {
  if (name == "both") return {fusion::Mode::kMean, fusion::Mode::kCumprod};
  return {fusion::mode_from_string(name)};
}

}  // namespace

int exit_code(const std::exception& e) {
  if (dynamic_cast<const IoError*>(&e)) return kExitIo;
  if (dynamic_cast<const NumericError*>(&e)) return kExitNumeric;
  if (dynamic_cast<const Error*>(&e)) return kExitInvalidInput;
  return kExitFailure;
}

std::size_t parse_vocab_size(const std::string& size) {
  if (size == "small") return 96;
  if (size == "medium") return 128;
  if (size == "large") return 256;
  if (size.empty() || !std::all_of(size.begin(), size.end(), [](char c) { return c >= '0' && c <= '9'; }) ||
      size.size() > 7) {
    throw ConfigError("bad vocabulary size '" + size + "' (small, medium, large or a number)");
  }
  return static_cast<std::size_t>(std::stoul(size));
}

void tokenizer_train(const TokenizerTrainArgs& args, std::ostream& out) {
  const Granularity g = tok::granularity_from_string(args.granularity);
  const auto words = read_corpus(args.corpus);
  std::error_code ec;
  std::filesystem::create_directories(args.out, ec);
  if (ec) throw IoError("cannot create " + args.out.string() + ": " + ec.message());
  const std::string stem(tok::to_string(g));
  std::size_t size = 0;
  if (g == Granularity::kChar) {
    auto v = tok::Vocabulary::characters();
    v.save(args.out / (stem + ".vocab.json"));
    size = v.size();
  } else {
    if (words.empty()) throw CorpusError("corpus " + args.corpus.string() + " has no words");
    const std::size_t target = parse_vocab_size(args.size);
    if (g == Granularity::kBpe) {
      if (target < 39) throw ConfigError("bpe vocabulary size must be at least 39");
      auto m = tok::bpe_train(words, target - 39);
      m.vocab.save(args.out / (stem + ".vocab.json"));
      m.merges.save(args.out / (stem + ".merges.json"));
      size = m.vocab.size();
    } else {
      auto v = tok::wordpiece_train(words, target);
      v.save(args.out / (stem + ".vocab.json"));
      size = v.size();
    }
  }
  out << nlohmann::json{{"granularity", stem}, {"vocab_size", size}}.dump() << '\n';
}

void synth(const SynthArgs& args, std::ostream& out) {
  const data::Lexicon lex = args.lexicon ? data::Lexicon::load(*args.lexicon) : data::default_lexicon();
  if (args.n_train == 0 || args.n_test == 0) throw ConfigError("split sizes must be positive");
  auto [train_set, test_set] = data::make_splits(lex, args.n_train, args.n_test, args.seed, args.augment);
  data::save_dataset(train_set, args.out / "train");
  data::save_dataset(test_set, args.out / "test");
  lex.save(args.out / "lexicon.tsv");
  out << nlohmann::json{{"train", train_set.size()}, {"test", test_set.size()}, {"words", lex.words.size()}, {"seed", args.seed}}.dump()
      << '\n';
}

train::TrainConfig resolve_train_config(const TrainArgs& args) {
  train::TrainConfig cfg = args.config ? train::TrainConfig::load(*args.config) : train::TrainConfig{};
  if (args.heads) cfg.heads = model::parse_head_list(*args.heads);
  if (args.epochs) cfg.epochs = *args.epochs;
  if (const char* env = std::getenv("MGP_SEED")) {
    const std::string s(env);
    if (s.empty() || !std::all_of(s.begin(), s.end(), [](char c) { return c >= '0' && c <= '9'; }) || s.size() > 19) {
      throw ConfigError("MGP_SEED must be a non-negative integer, got '" + s + "'");
    }
    cfg.seed = std::stoull(s);
  }
  cfg.validate();
  return cfg;
}

void train(const TrainArgs& args, std::ostream& out) {
  const auto cfg = resolve_train_config(args);
  const data::Dataset train_set = data::load_dataset(args.data);
  if (train_set.empty()) throw ConfigError("no samples in " + args.data.string());
  std::optional<data::Dataset> eval_set;
  if (args.eval_data) eval_set = data::load_dataset(*args.eval_data);
  train::TrainOptions opts;
  opts.out_dir = args.out;
  opts.resume = args.resume;
  opts.eval_set = eval_set ? &*eval_set : nullptr;
  const auto summary = train::train(cfg, train_set, opts);
  out << nlohmann::json{{"epochs", summary.epochs_completed},
                        {"steps", summary.steps},
                        {"checkpoint", (args.out / "last.mgpc").string()},
                        {"report", summary.last_eval.to_json()}}
             .dump()
      << '\n';
}

train::LoadedModel load_model(const std::filesystem::path& checkpoint) {
  try {
    return train::load_checkpoint(checkpoint);
  } catch (const IoError&) {
    throw;
  } catch (const Error& e) {
    throw IoError(std::string("cannot load checkpoint: ") + e.what());
  }
}

Tensor<float> load_probe_image(const std::filesystem::path& path, const model::ModelConfig& cfg) {
  Tensor<float> img = data::read_ppm(path);
  if (img.dim(0) != cfg.H || img.dim(1) != cfg.W) {
    throw DimensionError(path.string() + " is " + std::to_string(img.dim(1)) + "x" + std::to_string(img.dim(0)) +
                         "; the model needs exactly " + std::to_string(cfg.W) + "x" + std::to_string(cfg.H));
  }
  return img.reshaped({1, cfg.H, cfg.W, cfg.C});
}

void eval(const EvalArgs& args, std::ostream& out) {
  const auto modes = fusion_modes(args.fusion);
  if (args.data.empty()) throw ConfigError("no dataset given");
  auto loaded = load_model(args.checkpoint);
  nlohmann::json report{{"checkpoint", args.checkpoint.string()}, {"datasets", nlohmann::json::object()}};
  std::vector<std::pair<std::string, train::EvalReport>> rows;
  for (const auto& dir : args.data) {
    const data::Dataset d = data::load_dataset(dir);
    if (d.empty()) throw ConfigError("no samples in " + dir.string());
    auto r = train::evaluate(loaded.model, loaded.tokenizers, d);
    auto j = r.to_json();
    if (modes.size() == 1) j["fused_accuracy"].erase(modes[0] == fusion::Mode::kMean ? "cumprod" : "mean");
    std::string name = dir.filename().string();
    if (name.empty()) name = dir.parent_path().filename().string();
    report["datasets"][name] = j;
    rows.emplace_back(name, r);
  }
  const std::string text = report.dump(2);
  out << text << '\n';
  if (args.json_out) {
    std::ofstream f(*args.json_out);
    if (!f) throw IoError("cannot write " + args.json_out->string());
    f << text << '\n';
  }

  const auto& cfg = loaded.model.config();
  out << '\n' << std::left << std::setw(14) << "dataset" << std::setw(9) << "samples";
  for (auto g : model::kAllGranularities) {
    if (cfg.has_head(g)) out << std::setw(11) << tok::to_string(g);
  }
  for (auto m : modes) out << std::setw(15) << ("fuse-" + std::string(fusion::to_string(m)));
  out << std::setw(9) << "bound" << "ms/img\n";
  for (const auto& [name, r] : rows) {
    out << std::setw(14) << name << std::setw(9) << r.samples;
    for (auto g : model::kAllGranularities) {
      if (cfg.has_head(g)) out << std::setw(11) << fixed(*r.head_accuracy[gi(g)]);
    }
    for (auto m : modes) out << std::setw(15) << fixed(m == fusion::Mode::kMean ? r.fused_mean : r.fused_cumprod);
    out << std::setw(9) << fixed(r.upper_bound) << fixed(r.ms_per_image, 2) << '\n';
  }
}

void predict(const PredictArgs& args, std::ostream& out) {
  const auto mode = fusion::mode_from_string(args.fusion);
  auto loaded = load_model(args.checkpoint);
  const auto image = load_probe_image(args.image, loaded.model.config());
  auto preds = train::predict(loaded.model, loaded.tokenizers, image)[0];
  for (auto& p : preds) fusion::apply_score(p, mode);
  const auto fused = fusion::fuse(preds, mode);

  if (args.json) {
    nlohmann::json heads = nlohmann::json::array();
    for (const auto& p : fused.all) {
      heads.push_back({{"head", tok::to_string(p.granularity)},
                       {"text", p.text},
                       {"score", p.score},
                       {"segments", segmentation(p, loaded.tokenizers.at(p.granularity).vocab())}});
    }
    nlohmann::json j{{"text", fused.winner.text},
                     {"score", fused.winner.score},
                     {"head", tok::to_string(fused.winner.granularity)},
                     {"fusion", fusion::to_string(mode)}};
    if (args.explain) j["heads"] = heads;
    out << j.dump() << '\n';
    return;
  }
  out << fused.winner.text << ' ' << fixed(fused.winner.score) << '\n';
  if (!args.explain) return;
  // Score / Gra. / Pred. rows against the Char, BPE, WP and Fused columns.
  constexpr int kw = 16;
  out << '\n' << std::left << std::setw(8) << "";
  static const char* names[] = {"Char", "BPE", "WP"};
  for (const auto& p : fused.all) out << std::setw(kw) << names[gi(p.granularity)];
  out << "Fused\n" << std::setw(8) << "Score";
  for (const auto& p : fused.all) out << std::setw(kw) << fixed(p.score);
  out << fixed(fused.winner.score) << '\n' << std::setw(8) << "Gra.";
  for (const auto& p : fused.all) out << std::setw(kw) << segmentation(p, loaded.tokenizers.at(p.granularity).vocab());
  out << "-\n" << std::setw(8) << "Pred.";
  for (const auto& p : fused.all) out << std::setw(kw) << p.text;
  out << fused.winner.text << '\n';
}

Tensor<float> attention_rows(const model::MgpModel<float>& model, const Tensor<float>& image, Granularity g) {
  const auto& cfg = model.config();
  if (!cfg.has_head(g)) throw ConfigError("model has no " + std::string(tok::to_string(g)) + " head");
  NoGradGuard no_grad;
  auto out = model.forward(image.rank() == 3 ? image.reshaped({1, image.dim(0), image.dim(1), image.dim(2)}) : image);
  auto rows = model::mask_rows(out.head(g).masks.value());  // [1, T, N+1]
  return rows.reshaped({cfg.T, cfg.seq_len()});
}

void dump_attention(const DumpAttentionArgs& args, std::ostream& out) {
  const Granularity g = tok::granularity_from_string(args.head);
  auto loaded = load_model(args.checkpoint);
  const auto& cfg = loaded.model.config();
  if (!cfg.has_head(g)) throw ConfigError("checkpoint has no " + args.head + " head");
  const auto image = load_probe_image(args.image, cfg);
  const Tensor<float> rows = attention_rows(loaded.model, image, g);
  std::error_code ec;
  std::filesystem::create_directories(args.out, ec);
  if (ec) throw IoError("cannot create " + args.out.string() + ": " + ec.message());

  const std::size_t gh = cfg.H / cfg.P, gw = cfg.W / cfg.P, S = cfg.seq_len();
  nlohmann::json slots = nlohmann::json::array();
  for (std::size_t t = 0; t < cfg.T; ++t) {
    const float* row = rows.ptr() + t * S;
    const auto [lo, hi] = std::minmax_element(row + 1, row + S);
    std::vector<std::uint8_t> px(gh * gw);
    double mass = 0.0;
    for (std::size_t i = 0; i < px.size(); ++i) {
      mass += row[1 + i];
      const double span = static_cast<double>(*hi) - *lo;
      px[i] = span > 0 ? static_cast<std::uint8_t>(std::lround(255.0 * (row[1 + i] - *lo) / span)) : 0;
    }
    char name[32];
    std::snprintf(name, sizeof name, "slot_%02zu.pgm", t);
    data::write_pgm(args.out / name, px, gw, gh);
    slots.push_back({{"file", name}, {"class_token", row[0]}, {"patch_mass", mass}});
  }
  out << nlohmann::json{{"head", tok::to_string(g)}, {"slots", slots}}.dump() << '\n';
}

void bench(const BenchArgs& args, std::ostream& out) {
  if (args.n == 0) throw ConfigError("--n must be at least 1");
  auto loaded = load_model(args.checkpoint);
  const auto& cfg = loaded.model.config();
  auto probe = data::render("bench", 1, false).image;
  if (probe.dim(0) != cfg.H || probe.dim(1) != cfg.W) probe = Tensor<float>({cfg.H, cfg.W, cfg.C}, 1.0f);
  const auto image = probe.reshaped({1, cfg.H, cfg.W, cfg.C});

  auto once = [&] {
    auto preds = train::predict(loaded.model, loaded.tokenizers, image)[0];
    for (auto& p : preds) fusion::apply_score(p, fusion::Mode::kCumprod);
    return fusion::fuse(std::move(preds), fusion::Mode::kCumprod).winner.score;
  };
  for (int i = 0; i < 5; ++i) once();
  std::vector<double> ms(args.n);
  for (auto& m : ms) {
    const auto t0 = std::chrono::steady_clock::now();
    once();
    m = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count();
  }
  std::sort(ms.begin(), ms.end());
  const double median = ms.size() % 2 ? ms[ms.size() / 2] : 0.5 * (ms[ms.size() / 2 - 1] + ms[ms.size() / 2]);

  const std::size_t subword = (cfg.has_head(Granularity::kBpe) ? model::head_param_count(cfg, cfg.K_bpe) : 0) +
                              (cfg.has_head(Granularity::kWordPiece) ? model::head_param_count(cfg, cfg.K_wp) : 0);
  out << nlohmann::json{{"ms_per_image", median},
                        {"runs", args.n},
                        {"params",
                         {{"total", param_count(loaded.model.params())},
                          {"formula", model::model_param_count(cfg)},
                          {"backbone", model::backbone_param_count(cfg)},
                          {"char_head", model::head_param_count(cfg, cfg.K_char)},
                          {"subword_heads", subword}}}}
             .dump()
      << '\n';
}

}  // namespace mgp::cli
