#include "mgp/fusion.hpp"

#include <algorithm>
#include <cmath>

#include "mgp/errors.hpp"

namespace mgp::fusion {

std::string_view to_string(Mode m) { return m == Mode::kMean ? "mean" : "cumprod"; }

Mode mode_from_string(std::string_view name) {
  if (name == "mean") return Mode::kMean;
  if (name == "cumprod") return Mode::kCumprod;
  throw ConfigError("unknown fusion mode '" + std::string(name) + "'");
}

template <typename Real>
Prediction decode_head(const Tensor<Real>& logits, std::size_t b, const tok::Vocabulary& vocab) {
  if (logits.rank() < 2) throw DimensionError("decode_head expects [.., T, K] logits");
  const std::size_t K = logits.cols(), T = logits.dim(logits.rank() - 2);
  if (K != vocab.size()) {
    throw DimensionError("logits have K=" + std::to_string(K) + " but vocabulary has " + std::to_string(vocab.size()));
  }
  if ((b + 1) * T * K > logits.size()) throw DimensionError("sample index out of range");
  Prediction pred;
  pred.granularity = vocab.granularity();
  pred.no_eos = true;
  const Real* base = logits.ptr() + b * T * K;
  for (std::size_t t = 0; t < T; ++t) {
    const Real* row = base + t * K;
    const std::size_t arg = static_cast<std::size_t>(std::max_element(row, row + K) - row);
    const double top = static_cast<double>(row[arg]);
    double denom = 0.0;
    for (std::size_t k = 0; k < K; ++k) denom += std::exp(static_cast<double>(row[k]) - top);
    pred.confidences.push_back(1.0 / denom);
    pred.ids.push_back(static_cast<tok::TokenId>(arg));
    if (pred.ids.back() == vocab.eos_id()) {
      pred.no_eos = false;
      break;
    }
  }
  pred.text = tok::decode(vocab, pred.ids);
  return pred;
}

template <typename Real>
Prediction decode_head(const Tensor<Real>& logits, const tok::Vocabulary& vocab) {
  return decode_head(logits, 0, vocab);
}

double score_mean(std::span<const double> confidences) {
  if (confidences.empty()) throw ProtocolError("mean score of an empty confidence list");
  double s = 0.0;
  for (double c : confidences) s += c;
  return s / static_cast<double>(confidences.size());
}

double score_cumprod(std::span<const double> confidences) {
  if (confidences.empty()) throw ProtocolError("cumprod score of an empty confidence list");
  double p = 1.0;
  for (double c : confidences) p *= c;
  return p;
}

double score(std::span<const double> confidences, Mode mode) {
  return mode == Mode::kMean ? score_mean(confidences) : score_cumprod(confidences);
}

void apply_score(Prediction& pred, Mode mode) { pred.score = score(pred.confidences, mode); }

FusedResult fuse(std::vector<Prediction> preds, Mode mode) {
  if (preds.empty()) throw ProtocolError("fuse needs at least one prediction");
  std::stable_sort(preds.begin(), preds.end(),
                   [](const Prediction& a, const Prediction& b) { return a.granularity < b.granularity; });
  std::size_t best = 0;
  for (std::size_t i = 1; i < preds.size(); ++i) {
    if (preds[i].score > preds[best].score) best = i;
  }
  FusedResult out;
  out.winner = preds[best];
  out.all = std::move(preds);
  out.mode = mode;
  return out;
}

bool oracle_upper_bound(std::span<const Prediction> preds, std::string_view ground_truth) {
  return std::any_of(preds.begin(), preds.end(), [&](const Prediction& p) { return p.text == ground_truth; });
}

template Prediction decode_head<float>(const Tensor<float>&, const tok::Vocabulary&);
template Prediction decode_head<double>(const Tensor<double>&, const tok::Vocabulary&);
template Prediction decode_head<float>(const Tensor<float>&, std::size_t, const tok::Vocabulary&);
template Prediction decode_head<double>(const Tensor<double>&, std::size_t, const tok::Vocabulary&);

}  // namespace mgp::fusion
