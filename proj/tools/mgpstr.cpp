#include <iostream>

#include <CLI11.hpp>
#include <spdlog/sinks/stdout_color_sinks.h>
#include <spdlog/spdlog.h>

#include "mgp/cli.hpp"

int main(int argc, char** argv) {
  CLI::App app{"mgpstr: multi-granularity scene text recognition"};
  app.require_subcommand(1);
  std::string log_level = "info";
  app.add_option("--log-level", log_level, "trace, debug, info, warn, error or off");

  mgp::cli::TokenizerTrainArgs tt;
  auto* c_tok = app.add_subcommand("tokenizer-train", "learn a BPE / WordPiece vocabulary from a word list");
  c_tok->add_option("--corpus", tt.corpus, "one word per line")->required();
  c_tok->add_option("--granularity", tt.granularity, "char, bpe or wp");
  c_tok->add_option("--size", tt.size, "small, medium, large or a vocabulary size");
  c_tok->add_option("--out", tt.out, "output directory")->required();

  mgp::cli::SynthArgs sy;
  bool no_augment = false;
  std::string lexicon;
  auto* c_syn = app.add_subcommand("synth", "render train/test splits from a lexicon");
  c_syn->add_option("--lexicon", lexicon, "word list (default: built-in lexicon)");
  c_syn->add_option("--train", sy.n_train, "train renderings");
  c_syn->add_option("--test", sy.n_test, "test renderings");
  c_syn->add_option("--seed", sy.seed);
  c_syn->add_flag("--no-augment", no_augment, "skip noise and rotation");
  c_syn->add_option("--out", sy.out, "output directory")->required();

  mgp::cli::TrainArgs tr;
  std::string config, eval_data, heads;
  std::size_t epochs = 0;
  auto* c_train = app.add_subcommand("train", "train a model");
  c_train->add_option("--config", config, "train config JSON");
  c_train->add_option("--data", tr.data, "dataset directory (labels.tsv + PPM)")->required();
  c_train->add_option("--eval-data", eval_data, "dataset evaluated after every epoch");
  c_train->add_option("--out", tr.out, "run directory")->required();
  c_train->add_option("--heads", heads, "e.g. char or char,bpe,wp");
  c_train->add_option("--epochs", epochs, "override the config epoch count");
  c_train->add_flag("--resume", tr.resume, "continue from the run directory");

  mgp::cli::EvalArgs ev;
  std::string eval_json;
  auto* c_eval = app.add_subcommand("eval", "evaluate a checkpoint");
  c_eval->add_option("--checkpoint", ev.checkpoint)->required();
  c_eval->add_option("--data", ev.data, "one or more dataset directories")->required();
  c_eval->add_option("--fusion", ev.fusion, "mean, cumprod or both");
  c_eval->add_option("--json", eval_json, "also write the JSON report here");

  mgp::cli::PredictArgs pr;
  auto* c_pred = app.add_subcommand("predict", "recognize one image");
  c_pred->add_option("--checkpoint", pr.checkpoint)->required();
  c_pred->add_option("--image", pr.image, "32x128 PPM")->required();
  c_pred->add_flag("--explain", pr.explain, "per-head scores, segmentations and predictions");
  c_pred->add_option("--fusion", pr.fusion, "mean or cumprod");
  c_pred->add_flag("--json", pr.json, "JSON output");

  mgp::cli::DumpAttentionArgs da;
  auto* c_dump = app.add_subcommand("dump-attention", "write the A3 masks of one head as PGM images");
  c_dump->add_option("--checkpoint", da.checkpoint)->required();
  c_dump->add_option("--image", da.image)->required();
  c_dump->add_option("--head", da.head, "char, bpe or wp");
  c_dump->add_option("--out", da.out)->required();

  mgp::cli::BenchArgs be;
  auto* c_bench = app.add_subcommand("bench", "single-image latency and parameter counts");
  c_bench->add_option("--checkpoint", be.checkpoint)->required();
  c_bench->add_option("--n", be.n, "timed runs after 5 warmups");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return mgp::cli::kExitInvalidInput;
  }
  // stdout carries machine-readable output only.
  spdlog::set_default_logger(spdlog::stderr_color_mt("mgpstr"));
  spdlog::set_level(spdlog::level::from_str(log_level));

  try {
    if (c_tok->parsed()) {
      mgp::cli::tokenizer_train(tt, std::cout);
    } else if (c_syn->parsed()) {
      sy.augment = !no_augment;
      if (!lexicon.empty()) sy.lexicon = lexicon;
      mgp::cli::synth(sy, std::cout);
    } else if (c_train->parsed()) {
      if (!config.empty()) tr.config = config;
      if (!eval_data.empty()) tr.eval_data = eval_data;
      if (!heads.empty()) tr.heads = heads;
      if (epochs) tr.epochs = epochs;
      mgp::cli::train(tr, std::cout);
    } else if (c_eval->parsed()) {
      if (!eval_json.empty()) ev.json_out = eval_json;
      mgp::cli::eval(ev, std::cout);
    } else if (c_pred->parsed()) {
      mgp::cli::predict(pr, std::cout);
    } else if (c_dump->parsed()) {
      mgp::cli::dump_attention(da, std::cout);
    } else if (c_bench->parsed()) {
      mgp::cli::bench(be, std::cout);
    }
  } catch (const std::exception& e) {
    spdlog::error("{}", e.what());
    return mgp::cli::exit_code(e);
  }
  return mgp::cli::kExitOk;
}
