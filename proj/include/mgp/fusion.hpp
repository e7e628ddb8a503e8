#pragma once

// Decoding of per-granularity logits and confidence-based arbitration between
// the heads.

#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "mgp/tensor.hpp"
#include "mgp/tokenizers.hpp"

namespace mgp::fusion {

using tok::Granularity;

enum class Mode { kMean, kCumprod };

std::string_view to_string(Mode m);
Mode mode_from_string(std::string_view name);

struct Prediction {
  Granularity granularity = Granularity::kChar;
  std::string text;
  // Max softmax probability at positions 1..eos (all T when no eos).
  std::vector<double> confidences;
  std::vector<tok::TokenId> ids;  // argmax ids over the same positions
  double score = 0.0;
  bool no_eos = false;
};

// logits [T, K] for one sample. Argmax ties resolve to the lowest id.
template <typename Real>
Prediction decode_head(const Tensor<Real>& logits, const tok::Vocabulary& vocab);

// Same, for sample b of batched logits [B, T, K].
template <typename Real>
Prediction decode_head(const Tensor<Real>& logits, std::size_t b, const tok::Vocabulary& vocab);

double score_mean(std::span<const double> confidences);
double score_cumprod(std::span<const double> confidences);
double score(std::span<const double> confidences, Mode mode);

// Fills pred.score from its confidences.
void apply_score(Prediction& pred, Mode mode);

struct FusedResult {
  Prediction winner;
  std::vector<Prediction> all;  // in Char, BPE, WP order
  Mode mode = Mode::kCumprod;
};

// Highest existing score wins; ties go Char > BPE > WP. Scores are taken as
// given, so callers either apply_score first or supply fixed scores.
FusedResult fuse(std::vector<Prediction> preds, Mode mode);

bool oracle_upper_bound(std::span<const Prediction> preds, std::string_view ground_truth);

}  // namespace mgp::fusion
