#include <chrono>
#include <cmath>
#include <fstream>
#include <limits>

#include <spdlog/spdlog.h>

#include "mgp/errors.hpp"
#include "mgp/random.hpp"
#include "mgp/trainer.hpp"

namespace mgp::train {

namespace {

constexpr const char* kCheckpointFile = "last.mgpc";
constexpr const char* kOptimizerFile = "optimizer.mgpc";
constexpr const char* kStateFile = "train_state.json";
constexpr const char* kMetricsFile = "metrics.jsonl";
constexpr const char* kNanDumpFile = "nan_dump.json";

nlohmann::json per_head(const std::array<std::optional<double>, 3>& v) {
  nlohmann::json j = nlohmann::json::object();
  for (auto g : model::kAllGranularities) {
    const auto& x = v[static_cast<std::size_t>(g)];
    if (x) j[std::string(tok::to_string(g))] = *x;
  }
  return j;
}

nlohmann::json finite_or_null(double v) { return std::isfinite(v) ? nlohmann::json(v) : nlohmann::json(); }

void append_line(const std::filesystem::path& path, const nlohmann::json& j) {
  std::ofstream out(path, std::ios::app);
  if (!out) throw IoError("cannot append to " + path.string());
  out << j.dump() << '\n';
}

// Drops records past `steps` (written by an interrupted epoch) before resuming.
void trim_metrics(const std::filesystem::path& path, std::size_t steps) {
  std::ifstream in(path);
  if (!in) return;
  std::vector<std::string> keep;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    try {
      if (nlohmann::json::parse(line).value("step", std::size_t{0}) <= steps) keep.push_back(line);
    } catch (const nlohmann::json::exception&) {
      break;  // torn last line
    }
  }
  in.close();
  std::ofstream out(path, std::ios::trunc);
  for (const auto& l : keep) out << l << '\n';
}

void write_nan_dump(const std::filesystem::path& path, const MgpModel<float>& model, std::size_t epoch,
                    std::size_t step, double lr, const std::vector<std::string>& batch_labels, const std::string& what) {
  nlohmann::json params = nlohmann::json::object();
  for (const auto& [name, p] : model.params()) {
    double lo = std::numeric_limits<double>::infinity(), hi = -lo, sq = 0;
    std::size_t bad = 0;
    for (float v : p.value().data()) {
      if (!std::isfinite(v)) {
        ++bad;
        continue;
      }
      lo = std::min<double>(lo, v);
      hi = std::max<double>(hi, v);
      sq += static_cast<double>(v) * v;
    }
    params[name] = {{"min", finite_or_null(lo)}, {"max", finite_or_null(hi)}, {"l2", std::sqrt(sq)}, {"nonfinite", bad}};
  }
  nlohmann::json j{{"error", what},  {"epoch", epoch},         {"step", step},
                   {"lr", lr},       {"batch_labels", batch_labels}, {"params", params}};
  std::ofstream out(path);
  if (out) out << j.dump(2) << '\n';
}

}  // namespace

TrainSummary train(const TrainConfig& cfg, const data::Dataset& train_set, const TrainOptions& options,
                   std::optional<TokenizerSet> tokenizers) {
  cfg.validate();
  const auto& dir = options.out_dir;
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw IoError("cannot create " + dir.string() + ": " + ec.message());

  TrainSummary summary;
  Adadelta opt(cfg.rho, cfg.eps);
  std::optional<MgpModel<float>> model;
  TokenizerSet codecs;

  if (options.resume && std::filesystem::exists(dir / kStateFile)) {
    std::ifstream in(dir / kStateFile);
    nlohmann::json state;
    try {
      state = nlohmann::json::parse(in);
    } catch (const nlohmann::json::exception& e) {
      throw FormatError((dir / kStateFile).string() + ": " + e.what());
    }
    if (state.at("config") != cfg.to_json()) throw ConfigError("resume: config differs from the interrupted run");
    summary.epochs_completed = state.at("epochs_completed").get<std::size_t>();
    summary.steps = state.at("steps").get<std::size_t>();
    auto loaded = load_checkpoint(dir / kCheckpointFile);
    model.emplace(std::move(loaded.model));
    codecs = std::move(loaded.tokenizers);
    opt.load_state(read_checkpoint(dir / kOptimizerFile).tensors);
    trim_metrics(dir / kMetricsFile, summary.steps);
    spdlog::info("resuming after epoch {} (step {})", summary.epochs_completed, summary.steps);
  } else {
    codecs = tokenizers ? std::move(*tokenizers) : train_tokenizers(train_set.labels(), cfg);
    model.emplace(model_config_for(cfg, codecs), cfg.seed);
    std::ofstream(dir / kMetricsFile, std::ios::trunc);
  }
  const ModelConfig& mc = model->config();

  EncodedDataset enc = encode_dataset(train_set, codecs, mc.T);
  if (enc.indices.empty()) throw ConfigError("no samples to train on");
  const std::size_t n = enc.indices.size();
  const std::size_t steps_per_epoch = (n + cfg.batch_size - 1) / cfg.batch_size;
  const std::size_t total_steps = steps_per_epoch * cfg.epochs;
  spdlog::info("training {} samples, {} steps/epoch, {} parameters", n, steps_per_epoch, param_count(model->params()));

  std::size_t epochs_this_run = 0;
  const auto run_start = std::chrono::steady_clock::now();
  for (std::size_t epoch = summary.epochs_completed; epoch < cfg.epochs; ++epoch) {
    if (options.max_epochs_this_run && epochs_this_run >= *options.max_epochs_this_run) break;
    const auto epoch_start = std::chrono::steady_clock::now();
    std::vector<std::size_t> order(n);
    for (std::size_t i = 0; i < n; ++i) order[i] = i;
    Rng rng(mix_seed(cfg.seed, "epoch." + std::to_string(epoch)));
    shuffle(order.begin(), order.end(), rng);

    std::array<double, 3> loss_sum{};
    EvalAccumulator train_acc;
    std::vector<std::size_t> sample_idx;
    std::vector<Labels> batch_labels;
    for (std::size_t s = 0; s < steps_per_epoch; ++s) {
      sample_idx.clear();
      batch_labels.clear();
      for (std::size_t k = s * cfg.batch_size; k < std::min(n, (s + 1) * cfg.batch_size); ++k) {
        sample_idx.push_back(enc.indices[order[k]]);
        batch_labels.push_back(enc.labels[order[k]]);
      }
      const double lr = scheduled_lr(cfg, summary.steps, total_steps);
      StepResult r;
      try {
        r = train_step(*model, opt, train_set.batch(sample_idx), batch_labels, cfg, lr);
      } catch (const NumericError& e) {
        std::vector<std::string> words;
        for (auto i : sample_idx) words.push_back(train_set.label(i));
        write_nan_dump(dir / kNanDumpFile, *model, epoch + 1, summary.steps + 1, lr, words, e.what());
        spdlog::error("{} at step {}; diagnostics in {}", e.what(), summary.steps + 1, (dir / kNanDumpFile).string());
        throw;
      }
      ++summary.steps;

      const std::size_t B = sample_idx.size();
      std::vector<std::vector<fusion::Prediction>> preds(B);
      for (auto g : model::kAllGranularities) {
        const auto gi = static_cast<std::size_t>(g);
        if (!r.losses[gi]) continue;
        loss_sum[gi] += *r.losses[gi] * static_cast<double>(B);
        for (std::size_t b = 0; b < B; ++b) preds[b].push_back(fusion::decode_head(r.logits[gi], b, codecs.at(g).vocab()));
      }
      for (std::size_t b = 0; b < B; ++b) train_acc.add(std::move(preds[b]), train_set.label(sample_idx[b]));

      if (cfg.log_every && summary.steps % cfg.log_every == 0) {
        append_line(dir / kMetricsFile, {{"type", "step"},
                                         {"epoch", epoch + 1},
                                         {"step", summary.steps},
                                         {"lr", lr},
                                         {"loss", per_head(r.losses)},
                                         {"total_loss", r.total},
                                         {"grad_norm", r.grad_norm}});
      }
    }

    std::array<std::optional<double>, 3> epoch_loss;
    for (auto g : model::kAllGranularities) {
      if (mc.has_head(g)) epoch_loss[static_cast<std::size_t>(g)] = loss_sum[static_cast<std::size_t>(g)] / static_cast<double>(n);
    }
    const EvalReport tr = train_acc.report();
    nlohmann::json record{{"type", "epoch"},
                          {"epoch", epoch + 1},
                          {"step", summary.steps},
                          {"loss", per_head(epoch_loss)},
                          {"accuracy", per_head(tr.head_accuracy)},
                          {"fused_accuracy", {{"mean", tr.fused_mean}, {"cumprod", tr.fused_cumprod}}},
                          {"upper_bound", tr.upper_bound}};
    summary.last_eval = tr;
    if (options.eval_set) {
      EvalReport ev = evaluate(*model, codecs, *options.eval_set);
      summary.last_eval = ev;
      record["eval"] = {{"samples", ev.samples},
                        {"accuracy", per_head(ev.head_accuracy)},
                        {"fused_accuracy", {{"mean", ev.fused_mean}, {"cumprod", ev.fused_cumprod}}},
                        {"upper_bound", ev.upper_bound}};
    }
    if (!options.omit_wall_time) {
      record["wall_time"] = std::chrono::duration<double>(std::chrono::steady_clock::now() - epoch_start).count();
    }
    append_line(dir / kMetricsFile, record);

    save_checkpoint(dir / kCheckpointFile, *model, codecs);
    write_checkpoint(dir / kOptimizerFile, Checkpoint{opt.state(), {}});
    summary.epochs_completed = epoch + 1;
    ++epochs_this_run;
    {
      std::ofstream out(dir / kStateFile);
      if (!out) throw IoError("cannot write " + (dir / kStateFile).string());
      out << nlohmann::json{{"epochs_completed", summary.epochs_completed}, {"steps", summary.steps}, {"config", cfg.to_json()}}.dump(2)
          << '\n';
    }
    spdlog::info("epoch {}/{}: char loss {:.4f}, train char acc {:.4f}, fused {:.4f}", epoch + 1, cfg.epochs,
                 epoch_loss[0].value_or(0.0), tr.head_accuracy[0].value_or(0.0), tr.fused_cumprod);
  }
  spdlog::debug("run took {:.1f}s", std::chrono::duration<double>(std::chrono::steady_clock::now() - run_start).count());
  return summary;
}

}  // namespace mgp::train
