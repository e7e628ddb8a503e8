#include <chrono>

#include "mgp/errors.hpp"
#include "mgp/trainer.hpp"

namespace mgp::train {

std::vector<std::vector<fusion::Prediction>> predict(const MgpModel<float>& model, const TokenizerSet& tokenizers,
                                                     const Tensor<float>& images) {
  NoGradGuard no_grad;
  auto out = model.forward(images);
  const std::size_t B = images.dim(0);
  std::vector<std::vector<fusion::Prediction>> preds(B);
  for (auto g : model::kAllGranularities) {
    if (!model.config().has_head(g)) continue;
    const auto& logits = out.head(g).logits.value();
    const auto& vocab = tokenizers.at(g).vocab();
    for (std::size_t b = 0; b < B; ++b) preds[b].push_back(fusion::decode_head(logits, b, vocab));
  }
  return preds;
}

void EvalAccumulator::add(std::vector<fusion::Prediction> preds, std::string_view truth) {
  if (preds.empty()) throw ProtocolError("no predictions for sample");
  ++n_;
  for (const auto& p : preds) {
    const auto gi = static_cast<std::size_t>(p.granularity);
    seen_[gi] = true;
    head_hits_[gi] += p.text == truth;
  }
  bound_hits_ += fusion::oracle_upper_bound(preds, truth);
  for (auto mode : {fusion::Mode::kMean, fusion::Mode::kCumprod}) {
    for (auto& p : preds) fusion::apply_score(p, mode);
    const bool hit = fusion::fuse(preds, mode).winner.text == truth;
    (mode == fusion::Mode::kMean ? mean_hits_ : cumprod_hits_) += hit;
  }
}

EvalReport EvalAccumulator::report() const {
  EvalReport r;
  r.samples = n_;
  if (n_ == 0) return r;
  const auto n = static_cast<double>(n_);
  for (std::size_t g = 0; g < 3; ++g) {
    if (seen_[g]) r.head_accuracy[g] = static_cast<double>(head_hits_[g]) / n;
  }
  r.fused_mean = static_cast<double>(mean_hits_) / n;
  r.fused_cumprod = static_cast<double>(cumprod_hits_) / n;
  r.upper_bound = static_cast<double>(bound_hits_) / n;
  return r;
}

nlohmann::json EvalReport::to_json() const {
  nlohmann::json heads = nlohmann::json::object();
  for (auto g : model::kAllGranularities) {
    const auto& a = head_accuracy[static_cast<std::size_t>(g)];
    if (a) heads[std::string(tok::to_string(g))] = *a;
  }
  return {{"samples", samples},
          {"head_accuracy", heads},
          {"fused_accuracy", {{"mean", fused_mean}, {"cumprod", fused_cumprod}}},
          {"upper_bound", upper_bound},
          {"ms_per_image", ms_per_image}};
}

EvalReport evaluate(const MgpModel<float>& model, const TokenizerSet& tokenizers, const data::Dataset& dataset,
                    std::size_t batch_size) {
  if (dataset.empty()) throw ConfigError("no samples");
  if (batch_size == 0) throw ConfigError("batch_size must be positive");
  EvalAccumulator acc;
  const auto start = std::chrono::steady_clock::now();
  std::vector<std::size_t> idx;
  for (std::size_t i0 = 0; i0 < dataset.size(); i0 += batch_size) {
    idx.clear();
    for (std::size_t i = i0; i < std::min(dataset.size(), i0 + batch_size); ++i) idx.push_back(i);
    auto preds = predict(model, tokenizers, dataset.batch(idx));
    for (std::size_t b = 0; b < idx.size(); ++b) acc.add(std::move(preds[b]), dataset.label(idx[b]));
  }
  const double ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - start).count();
  EvalReport r = acc.report();
  r.ms_per_image = ms / static_cast<double>(dataset.size());
  return r;
}

}  // namespace mgp::train
