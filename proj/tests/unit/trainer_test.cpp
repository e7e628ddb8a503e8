#include <gtest/gtest.h>

#include <cmath>
#include <fstream>
#include <iterator>

#include <unistd.h>

#include "mgp/errors.hpp"
#include "mgp/ops.hpp"
#include "mgp/random.hpp"
#include "mgp/trainer.hpp"

using namespace mgp;
using namespace mgp::train;

namespace {

std::filesystem::path scratch(const std::string& name) {
  auto p = std::filesystem::temp_directory_path() / ("mgp_train_" + name + "_" + std::to_string(::getpid()));
  std::filesystem::remove_all(p);
  std::filesystem::create_directories(p);
  return p;
}

std::vector<char> file_bytes(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), {}};
}

std::vector<std::string> file_lines(const std::filesystem::path& p) {
  std::ifstream in(p);
  std::vector<std::string> out;
  for (std::string l; std::getline(in, l);) out.push_back(l);
  return out;
}

const std::vector<std::string> kWords{"table", "coffee", "guide", "today", "water", "tablet", "cable", "1869"};

// Small config so loop tests stay fast: two blocks of width 48 on 16x32 images.
TrainConfig tiny_config(std::array<bool, 3> heads = {true, true, true}) {
  TrainConfig c;
  c.batch_size = 4;
  c.epochs = 2;
  c.seed = 11;
  c.heads = heads;
  c.bpe_vocab = 48;
  c.wp_vocab = 80;
  return c;
}

ModelConfig tiny_model(const TrainConfig& tc, const TokenizerSet& codecs) {
  ModelConfig m = model_config_for(tc, codecs);
  m.D = 48;
  m.L = 2;
  m.num_heads = 2;
  return m;
}

Tensor<float> random_images(std::size_t B, std::uint64_t seed, std::size_t H = 32, std::size_t W = 128) {
  Rng rng(seed);
  Tensor<float> t({B, H, W, 3});
  for (float& v : t.data()) v = static_cast<float>(rng.uniform());
  return t;
}

std::vector<Labels> labels_for(const std::vector<std::string>& words, const TokenizerSet& codecs, std::size_t T) {
  std::vector<Labels> out;
  for (const auto& w : words) out.push_back(prepare_labels(w, codecs, T));
  return out;
}

data::Dataset rendered(const std::vector<std::string>& words, std::uint64_t seed) {
  data::Dataset d;
  for (std::size_t i = 0; i < words.size(); ++i) {
    auto s = data::render(words[i], seed + i, false);
    d.add(s.image, s.label, s.seed);
  }
  return d;
}

std::map<std::string, Tensor<float>> snapshot(const ParamSet<float>& p) {
  std::map<std::string, Tensor<float>> out;
  for (const auto& [name, v] : p) out.emplace(name, v.value());
  return out;
}

}  // namespace

TEST(TrainConfigTest, DefaultsJsonRoundTripAndValidation) {
  TrainConfig c;
  EXPECT_EQ(c.batch_size, 32u);
  EXPECT_EQ(c.epochs, 10u);
  EXPECT_EQ(c.rho, 0.95);
  EXPECT_EQ(c.eps, 1e-6);
  EXPECT_EQ(c.lr, 1.0);
  EXPECT_EQ(c.clip_norm, 10.0);
  auto back = TrainConfig::from_json(c.to_json());
  EXPECT_EQ(back.to_json(), c.to_json());

  auto j = nlohmann::json::parse(R"({"epochs": 3, "heads": "char,wp", "loss_weights": {"wp": 0.5}})");
  auto p = TrainConfig::from_json(j);
  EXPECT_EQ(p.epochs, 3u);
  EXPECT_FALSE(p.heads[1]);
  EXPECT_TRUE(p.heads[2]);
  EXPECT_EQ(p.loss_weights[2], 0.5);

  EXPECT_THROW(TrainConfig::from_json({{"epoch", 3}}), ConfigError);
  EXPECT_THROW(TrainConfig::from_json({{"heads", "bpe"}}), ConfigError);
  EXPECT_THROW(TrainConfig::from_json({{"loss_weights", {{"char", -1.0}}}}), ConfigError);
  EXPECT_THROW(TrainConfig::from_json({{"rho", 1.0}}), ConfigError);
  EXPECT_THROW(TrainConfig::from_json({{"preset", "huge"}}), ConfigError);
  EXPECT_THROW(TrainConfig::from_json({{"batch_size", "many"}}), ConfigError);
  EXPECT_THROW(TrainConfig::load("/nonexistent/cfg.json"), IoError);
}

TEST(PrepareLabels, CompressionAndBoundaries) {
  auto codecs = train_tokenizers(kWords, tiny_config());
  auto l = prepare_labels("table", codecs, 27);
  ASSERT_TRUE(l[0] && l[1] && l[2]);
  EXPECT_EQ(l[0]->length, 6u);
  EXPECT_EQ(l[0]->ids[5], 1);
  EXPECT_LE(l[1]->length, 6u);
  EXPECT_LE(l[2]->length, 6u);
  for (const auto& s : l) EXPECT_EQ(s->ids.size(), 27u);

  const std::string longest(26, 'e');
  auto b = prepare_labels(longest, codecs, 27);
  EXPECT_EQ(b[0]->length, 27u);
  EXPECT_EQ(b[0]->ids[26], 1);
  EXPECT_THROW(prepare_labels(longest + "e", codecs, 27), LengthError);

  auto char_only = train_tokenizers(kWords, tiny_config({true, false, false}));
  auto c = prepare_labels("table", char_only, 27);
  EXPECT_TRUE(c[0]);
  EXPECT_FALSE(c[1]);
  EXPECT_FALSE(c[2]);
}

TEST(PrepareLabels, FailingSamplesAreSkipped) {
  auto codecs = train_tokenizers(kWords, tiny_config());
  data::Dataset d;
  Tensor<float> white({32, 128, 3}, 1.0f);
  d.add(white, "table");
  d.add(white, std::string(30, 'a'));
  d.add(white, "guide");
  auto enc = encode_dataset(d, codecs, 27);
  EXPECT_EQ(enc.indices, (std::vector<std::size_t>{0, 2}));
  EXPECT_EQ(enc.labels.size(), 2u);
}

TEST(AdadeltaTest, MatchesHandComputedUpdates) {
  ParamSet<float> p;
  p.emplace("w", Var<float>::leaf(Tensor<float>({1}, std::vector<float>{1.0f}), true));
  Adadelta opt(0.9, 1e-6);
  double w = 1.0, sq = 0.0, acc = 0.0;
  const double grads[] = {0.5, -0.25, 2.0};
  for (double g : grads) {
    p["w"].grad_buffer()[0] = static_cast<float>(g);
    opt.step(p, 0.7);
    p["w"].zero_grad();
    sq = 0.9 * sq + 0.1 * g * g;
    const double delta = std::sqrt(acc + 1e-6) / std::sqrt(sq + 1e-6) * g;
    acc = 0.9 * acc + 0.1 * delta * delta;
    w -= 0.7 * delta;
    EXPECT_NEAR(p["w"].value()[0], w, 1e-6);
  }
  auto state = opt.state();
  EXPECT_EQ(state.size(), 2u);
  Adadelta copy(0.9, 1e-6);
  copy.load_state(state);
  EXPECT_EQ(copy.state().at("sq_avg.w"), state.at("sq_avg.w"));
  EXPECT_THROW(copy.load_state({{"momentum.w", Tensor<float>({1})}}), FormatError);
}

TEST(Schedule, CosineEndpointsAndConstant) {
  TrainConfig c;
  EXPECT_EQ(scheduled_lr(c, 0, 100), 1.0);
  EXPECT_NEAR(scheduled_lr(c, 50, 100), 0.5, 1e-12);
  EXPECT_NEAR(scheduled_lr(c, 100, 100), 0.0, 1e-12);
  for (std::size_t t = 1; t < 100; ++t) EXPECT_LT(scheduled_lr(c, t, 100), scheduled_lr(c, t - 1, 100));
  c.schedule = Schedule::kConstant;
  EXPECT_EQ(scheduled_lr(c, 70, 100), 1.0);
}

TEST(ClipGradNorm, ScalesOnlyAboveThreshold) {
  ParamSet<float> p;
  p.emplace("a", Var<float>::leaf(Tensor<float>({2}), true));
  p.emplace("b", Var<float>::leaf(Tensor<float>({1}), true));
  p["a"].grad_buffer()[0] = 3.0f;
  p["b"].grad_buffer()[0] = 4.0f;
  EXPECT_NEAR(clip_grad_norm(p, 10.0), 5.0, 1e-12);
  EXPECT_EQ(p["a"].grad()[0], 3.0f);
  EXPECT_NEAR(clip_grad_norm(p, 1.0), 5.0, 1e-12);
  EXPECT_NEAR(p["a"].grad()[0], 0.6f, 1e-6);
  EXPECT_NEAR(p["b"].grad()[0], 0.8f, 1e-6);
  EXPECT_NEAR(clip_grad_norm(p, 0.0), 1.0, 1e-5);
}

TEST(TrainStep, InitialCharLossNearUniform) {
  auto tc = tiny_config();
  auto codecs = train_tokenizers(kWords, tc);
  MgpModel<float> m(model_config_for(tc, codecs), 3);
  Adadelta opt(tc.rho, tc.eps);
  auto r = train_step(m, opt, random_images(4, 1), labels_for({"table", "guide", "water", "1869"}, codecs, 27), tc, 1.0);
  ASSERT_TRUE(r.losses[0]);
  EXPECT_NEAR(*r.losses[0], std::log(38.0), 0.2);
  EXPECT_NEAR(*r.losses[1], std::log(static_cast<double>(codecs.at(Granularity::kBpe).vocab().size())), 0.2);
  EXPECT_NEAR(r.total, *r.losses[0] + *r.losses[1] + *r.losses[2], 1e-4);
}

TEST(TrainStep, ZeroWeightsOrZeroLrLeaveParametersUnchanged) {
  auto tc = tiny_config();
  auto codecs = train_tokenizers(kWords, tc);
  auto mc = tiny_model(tc, codecs);
  auto images = random_images(2, 5, 32, 128);
  auto labels = labels_for({"table", "cable"}, codecs, 27);
  {
    MgpModel<float> m(mc, 3);
    auto before = snapshot(m.params());
    auto zero = tc;
    zero.loss_weights = {0.0, 0.0, 0.0};
    Adadelta opt(tc.rho, tc.eps);
    auto r = train_step(m, opt, images, labels, zero, 1.0);
    EXPECT_TRUE(r.losses[0]);
    EXPECT_EQ(snapshot(m.params()), before);
  }
  {
    MgpModel<float> m(mc, 3);
    auto before = snapshot(m.params());
    Adadelta opt(tc.rho, tc.eps);
    for (int i = 0; i < 3; ++i) train_step(m, opt, images, labels, tc, 0.0);
    EXPECT_EQ(snapshot(m.params()), before);
  }
}

TEST(TrainStep, DeterministicTrajectory) {
  auto tc = tiny_config();
  auto codecs = train_tokenizers(kWords, tc);
  auto mc = tiny_model(tc, codecs);
  auto images = random_images(3, 6);
  auto labels = labels_for({"table", "cable", "today"}, codecs, 27);
  auto run = [&] {
    MgpModel<float> m(mc, 9);
    Adadelta opt(tc.rho, tc.eps);
    std::vector<double> losses;
    for (int i = 0; i < 5; ++i) losses.push_back(train_step(m, opt, images, labels, tc, 1.0).total);
    return std::make_pair(losses, snapshot(m.params()));
  };
  auto a = run(), b = run();
  EXPECT_EQ(a.first, b.first);
  EXPECT_EQ(a.second, b.second);
  EXPECT_LT(a.first.back(), a.first.front());
}

TEST(TrainStep, ZeroSubwordWeightsMatchCharOnlyModel) {
  auto full_cfg = tiny_config();
  auto codecs = train_tokenizers(kWords, full_cfg);
  auto full_mc = tiny_model(full_cfg, codecs);
  auto char_mc = full_mc;
  char_mc.enabled = {true, false, false};
  auto images = random_images(3, 7);
  auto labels = labels_for({"table", "coffee", "today"}, codecs, 27);
  auto weighted = full_cfg;
  weighted.loss_weights = {1.0, 0.0, 0.0};

  MgpModel<float> full(full_mc, 4), vision(char_mc, 4);
  Adadelta o1(full_cfg.rho, full_cfg.eps), o2(full_cfg.rho, full_cfg.eps);
  for (int i = 0; i < 4; ++i) {
    auto a = train_step(full, o1, images, labels, weighted, 1.0);
    auto b = train_step(vision, o2, images, labels, weighted, 1.0);
    ASSERT_EQ(*a.losses[0], *b.losses[0]) << i;
    EXPECT_FALSE(b.losses[1]);
  }
  for (const auto& [name, v] : vision.params()) EXPECT_EQ(v.value(), full.params().at(name).value()) << name;
}

TEST(TrainStep, NonFiniteLossThrowsBeforeUpdate) {
  auto tc = tiny_config({true, false, false});
  auto codecs = train_tokenizers(kWords, tc);
  MgpModel<float> m(tiny_model(tc, codecs), 1);
  m.params().at("heads.char.W.weight").mutable_value()[0] = std::nanf("");
  auto before = snapshot(m.params());
  Adadelta opt(tc.rho, tc.eps);
  EXPECT_THROW(train_step(m, opt, random_images(1, 2), labels_for({"table"}, codecs, 27), tc, 1.0), NumericError);
  auto after = snapshot(m.params());
  for (const auto& [name, t] : before) {
    for (std::size_t i = 0; i < t.size(); ++i) {
      ASSERT_TRUE((std::isnan(t[i]) && std::isnan(after.at(name)[i])) || t[i] == after.at(name)[i]);
    }
  }
  EXPECT_TRUE(opt.state().empty());
}

TEST(TrainStep, SingleSampleIsMemorized) {
  TrainConfig tc;
  tc.heads = {true, false, false};
  tc.schedule = Schedule::kConstant;
  auto codecs = train_tokenizers(kWords, tc);
  MgpModel<float> m(model_config_for(tc, codecs), 21);
  Adadelta opt(tc.rho, tc.eps);
  auto s = data::render("coffee", 4, false);
  auto images = s.image.reshaped({1, 32, 128, 3});
  auto labels = labels_for({"coffee"}, codecs, 27);
  double loss = 0;
  for (int i = 0; i < 500; ++i) loss = *train_step(m, opt, images, labels, tc, tc.lr).losses[0];
  EXPECT_LT(loss, 0.05);
  EXPECT_EQ(predict(m, codecs, images)[0][0].text, "coffee");
}

TEST(Checkpoint, RoundTripIsBitExact) {
  auto dir = scratch("ckpt");
  auto tc = tiny_config();
  auto codecs = train_tokenizers(kWords, tc);
  MgpModel<float> m(tiny_model(tc, codecs), 8);
  save_checkpoint(dir / "a.mgpc", m, codecs);
  auto loaded = load_checkpoint(dir / "a.mgpc");
  EXPECT_EQ(loaded.model.config().to_json(), m.config().to_json());
  EXPECT_EQ(snapshot(loaded.model.params()), snapshot(m.params()));
  for (auto g : model::kAllGranularities) EXPECT_EQ(loaded.tokenizers.at(g).vocab(), codecs.at(g).vocab());
  EXPECT_EQ(loaded.tokenizers.at(Granularity::kBpe).merges(), codecs.at(Granularity::kBpe).merges());

  auto probe = random_images(2, 99);
  NoGradGuard ng;
  auto a = m.forward(probe), b = loaded.model.forward(probe);
  for (auto g : model::kAllGranularities) EXPECT_EQ(a.head(g).logits.value(), b.head(g).logits.value());

  // Sidecar names derive from the checkpoint stem, so re-save under the same name.
  std::filesystem::create_directories(dir / "again");
  save_checkpoint(dir / "again" / "a.mgpc", loaded.model, loaded.tokenizers);
  EXPECT_EQ(file_bytes(dir / "a.mgpc"), file_bytes(dir / "again" / "a.mgpc"));
  EXPECT_EQ(file_bytes(dir / "a.bpe.merges.json"), file_bytes(dir / "again" / "a.bpe.merges.json"));
  std::filesystem::remove_all(dir);
}

TEST(Checkpoint, SizeMatchesParameterCountFormula) {
  auto dir = scratch("size");
  auto tc = tiny_config({true, false, false});
  auto codecs = train_tokenizers(kWords, tc);
  auto mc = model_config_for(tc, codecs);  // micro
  MgpModel<float> m(mc, 1);
  save_checkpoint(dir / "m.mgpc", m, codecs);
  // Independent count: patch embed, cls, pos, L blocks, char head.
  const std::size_t D = 96, L = 4, N = 256, PPC = 48, T = 27, K = 38;
  const std::size_t block = 4 * D + 4 * (D * D + D) + (4 * D * D + 4 * D) + (4 * D * D + D);
  const std::size_t count = PPC * D + D + D + (N + 1) * D + L * block + (D * T + D * D + K * D);
  EXPECT_EQ(param_count(m.params()), count);
  std::size_t header = 4 + 4 + 4 + 4;  // magic, version, count, metadata count
  for (const auto& [name, v] : m.params()) header += 2 + name.size() + 1 + 8 * v.value().rank();
  header += 2 + 6 + 4 + m.config().to_json().dump().size();
  EXPECT_EQ(std::filesystem::file_size(dir / "m.mgpc"), count * 4 + header);
  std::filesystem::remove_all(dir);
}

TEST(Checkpoint, CorruptFilesRejectedWithOffset) {
  auto dir = scratch("bad");
  auto tc = tiny_config({true, false, false});
  auto codecs = train_tokenizers(kWords, tc);
  MgpModel<float> m(tiny_model(tc, codecs), 2);
  save_checkpoint(dir / "ok.mgpc", m, codecs);
  auto bytes = file_bytes(dir / "ok.mgpc");
  auto write = [&](const std::string& name, const std::vector<char>& b) {
    std::ofstream(dir / name, std::ios::binary).write(b.data(), static_cast<std::streamsize>(b.size()));
    return dir / name;
  };
  for (std::size_t cut : {std::size_t{2}, std::size_t{10}, bytes.size() / 2, bytes.size() - 1}) {
    auto p = write("cut.mgpc", std::vector<char>(bytes.begin(), bytes.begin() + static_cast<std::ptrdiff_t>(cut)));
    try {
      load_checkpoint(p);
      ADD_FAILURE() << "truncated at " << cut << " accepted";
    } catch (const FormatError& e) {
      EXPECT_NE(std::string(e.what()).find("offset"), std::string::npos) << e.what();
    }
  }
  auto magic = bytes;
  magic[0] = 'X';
  EXPECT_THROW(load_checkpoint(write("magic.mgpc", magic)), FormatError);
  auto version = bytes;
  version[4] = 7;
  try {
    load_checkpoint(write("version.mgpc", version));
    ADD_FAILURE();
  } catch (const FormatError& e) {
    EXPECT_NE(std::string(e.what()).find("offset 8"), std::string::npos) << e.what();
  }
  auto trailing = bytes;
  trailing.push_back(0);
  EXPECT_THROW(load_checkpoint(write("trail.mgpc", trailing)), FormatError);
  EXPECT_THROW(load_checkpoint(dir / "missing.mgpc"), IoError);

  Checkpoint wrong;
  wrong.tensors.emplace("embed.cls", Tensor<float>({1, 96}));
  wrong.metadata["config"] = m.config().to_json().dump();
  write_checkpoint(dir / "wrong.mgpc", wrong);
  EXPECT_THROW(load_checkpoint(dir / "wrong.mgpc"), FormatError);
  std::filesystem::remove_all(dir);
}

TEST(Evaluate, ReportInvariantsAndEmptyDataset) {
  auto tc = tiny_config();
  auto codecs = train_tokenizers(kWords, tc);
  MgpModel<float> m(tiny_model(tc, codecs), 2);
  auto d = rendered(kWords, 3);
  auto r = evaluate(m, codecs, d, 3);
  EXPECT_EQ(r.samples, kWords.size());
  EXPECT_LE(r.fused_mean, r.upper_bound);
  EXPECT_LE(r.fused_cumprod, r.upper_bound);
  for (const auto& a : r.head_accuracy) EXPECT_TRUE(a && *a >= 0.0 && *a <= 1.0);
  EXPECT_GT(r.ms_per_image, 0.0);
  auto j = r.to_json();
  EXPECT_TRUE(j["head_accuracy"].contains("wordpiece"));
  EXPECT_THROW(evaluate(m, codecs, data::Dataset{}), ConfigError);
}

TEST(TrainLoop, ResumeContinuesTrajectoryExactly) {
  auto tc = tiny_config();
  tc.preset = "micro";
  tc.epochs = 3;
  tc.log_every = 1;
  auto d = rendered(kWords, 40);
  auto straight = scratch("straight"), resumed = scratch("resumed");
  TrainOptions o{straight, false, std::nullopt, nullptr, true};
  auto s1 = train::train(tc, d, o);
  EXPECT_EQ(s1.epochs_completed, 3u);
  EXPECT_EQ(s1.steps, 6u);

  TrainOptions r{resumed, false, std::size_t{1}, nullptr, true};
  EXPECT_EQ(train::train(tc, d, r).epochs_completed, 1u);
  // A torn record from the interrupted epoch is discarded on resume.
  std::ofstream(resumed / "metrics.jsonl", std::ios::app) << R"({"type":"step","step":3})" << "\n{\"ty";
  r.resume = true;
  r.max_epochs_this_run.reset();
  EXPECT_EQ(train::train(tc, d, r).epochs_completed, 3u);

  EXPECT_EQ(file_lines(straight / "metrics.jsonl"), file_lines(resumed / "metrics.jsonl"));
  EXPECT_EQ(file_bytes(straight / "last.mgpc"), file_bytes(resumed / "last.mgpc"));
  EXPECT_EQ(file_bytes(straight / "optimizer.mgpc"), file_bytes(resumed / "optimizer.mgpc"));
  EXPECT_EQ(file_lines(straight / "metrics.jsonl").size(), 6u + 3u);

  auto changed = tc;
  changed.seed = 12;
  r.resume = true;
  EXPECT_THROW(train::train(changed, d, r), ConfigError);
  std::filesystem::remove_all(straight);
  std::filesystem::remove_all(resumed);
}

TEST(TrainLoop, CharOnlyMetricsHaveNoSubwordFields) {
  auto tc = tiny_config({true, false, false});
  tc.epochs = 1;
  auto dir = scratch("charonly");
  auto d = rendered(kWords, 70);
  train::train(tc, d, TrainOptions{dir, false, std::nullopt, &d, false});
  auto lines = file_lines(dir / "metrics.jsonl");
  ASSERT_EQ(lines.size(), 1u);
  auto j = nlohmann::json::parse(lines[0]);
  EXPECT_EQ(j["loss"].size(), 1u);
  EXPECT_TRUE(j["loss"].contains("char"));
  EXPECT_FALSE(j["accuracy"].contains("bpe"));
  EXPECT_FALSE(j["eval"]["accuracy"].contains("wordpiece"));
  EXPECT_TRUE(j.contains("wall_time"));
  EXPECT_FALSE(std::filesystem::exists(dir / "last.bpe.vocab.json"));
  std::filesystem::remove_all(dir);
}

TEST(TrainLoop, NanAbortWritesDiagnostics) {
  auto tc = tiny_config({true, false, false});
  tc.epochs = 1;
  tc.lr = 1e30;  // guaranteed blow-up
  tc.clip_norm = 0;
  tc.schedule = Schedule::kConstant;
  auto dir = scratch("nan");
  auto d = rendered(kWords, 80);
  EXPECT_THROW(train::train(tc, d, TrainOptions{dir, false, std::nullopt, nullptr, false}), NumericError);
  ASSERT_TRUE(std::filesystem::exists(dir / "nan_dump.json"));
  std::ifstream in(dir / "nan_dump.json");
  auto j = nlohmann::json::parse(in);
  EXPECT_TRUE(j.contains("params"));
  EXPECT_GE(j["step"].get<int>(), 2);
  std::filesystem::remove_all(dir);
}
