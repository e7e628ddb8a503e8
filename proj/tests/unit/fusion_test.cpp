#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <random>

#include "mgp/errors.hpp"
#include "mgp/fusion.hpp"
#include "arbitration_fixtures.hpp"

using namespace mgp;
using namespace mgp::fusion;
using tok::Vocabulary;

namespace {

Tensor<double> one_hot_logits(const std::vector<tok::TokenId>& ids, std::size_t K, double magnitude = 40.0) {
  Tensor<double> t({ids.size(), K});
  for (std::size_t i = 0; i < ids.size(); ++i) t.at(i, static_cast<std::size_t>(ids[i])) = magnitude;
  return t;
}

Vocabulary small_wordpiece() {
  return Vocabulary(Granularity::kWordPiece, {"[PAD]", "[EOS]", "[UNK]", "ab", "##c", "a", "##b", "c", "##a", "b"}, 0,
                    1, 2);
}

Prediction make(Granularity g, std::string text, double score) {
  Prediction p;
  p.granularity = g;
  p.text = std::move(text);
  p.score = score;
  return p;
}

}  // namespace

TEST(DecodeHead, OneHotSingleCharacter) {
  auto v = Vocabulary::characters();
  auto p = decode_head(one_hot_logits({12, 1, 0, 0}, 38), v);
  EXPECT_EQ(p.text, "a");
  ASSERT_EQ(p.confidences.size(), 2u);
  for (double c : p.confidences) EXPECT_NEAR(c, 1.0, 1e-15);
  EXPECT_FALSE(p.no_eos);
}

TEST(DecodeHead, EosFirstGivesEmptyText) {
  auto v = Vocabulary::characters();
  auto p = decode_head(one_hot_logits({1, 12, 13}, 38), v);
  EXPECT_EQ(p.text, "");
  EXPECT_EQ(p.confidences.size(), 1u);
}

TEST(DecodeHead, MissingEosUsesAllPositions) {
  auto v = Vocabulary::characters();
  auto p = decode_head(one_hot_logits({12, 13, 14}, 38), v);
  EXPECT_EQ(p.text, "abc");
  EXPECT_EQ(p.confidences.size(), 3u);
  EXPECT_TRUE(p.no_eos);
}

TEST(DecodeHead, StripsContinuationPrefix) {
  auto v = small_wordpiece();
  auto p = decode_head(one_hot_logits({3, 4, 1, 0}, v.size()), v);
  EXPECT_EQ(p.text, "abc");
}

TEST(DecodeHead, KMismatchRejected) {
  EXPECT_THROW(decode_head(one_hot_logits({1}, 10), Vocabulary::characters()), DimensionError);
}

TEST(DecodeHead, MatchesExhaustiveSequenceSearch) {
  auto v = small_wordpiece();
  const std::size_t K = v.size(), T = 4;
  std::mt19937_64 rng(1);
  std::normal_distribution<double> nd(0.0, 2.0);
  for (int trial = 0; trial < 50; ++trial) {
    Tensor<double> logits({T, K});
    for (double& x : logits.data()) x = nd(rng);
    // Best joint sequence by enumerating all K^T id tuples.
    std::vector<tok::TokenId> best_ids(T), ids(T);
    double best = -1.0;
    std::size_t total = 1;
    for (std::size_t t = 0; t < T; ++t) total *= K;
    for (std::size_t code = 0; code < total; ++code) {
      std::size_t c = code;
      double prob = 1.0;
      for (std::size_t t = 0; t < T; ++t) {
        ids[t] = static_cast<tok::TokenId>(c % K);
        c /= K;
        double z = 0.0;
        for (std::size_t k = 0; k < K; ++k) z += std::exp(logits.at(t, k));
        prob *= std::exp(logits.at(t, static_cast<std::size_t>(ids[t]))) / z;
      }
      if (prob > best) {
        best = prob;
        best_ids = ids;
      }
    }
    auto eos = std::find(best_ids.begin(), best_ids.end(), v.eos_id());
    std::vector<tok::TokenId> expected(best_ids.begin(), eos == best_ids.end() ? eos : eos + 1);
    auto p = decode_head(logits, v);
    ASSERT_EQ(p.ids, expected);
    ASSERT_EQ(p.text, tok::decode(v, expected));
  }
}

TEST(DecodeHead, BatchedIndexSelectsSample) {
  auto v = Vocabulary::characters();
  Tensor<double> logits({2, 3, 38});
  logits[0 * 3 * 38 + 0 * 38 + 12] = 5;
  logits[0 * 3 * 38 + 1 * 38 + 1] = 5;
  logits[1 * 3 * 38 + 0 * 38 + 2] = 5;
  logits[1 * 3 * 38 + 1 * 38 + 3] = 5;
  logits[1 * 3 * 38 + 2 * 38 + 1] = 5;
  EXPECT_EQ(decode_head(logits, 0, v).text, "a");
  EXPECT_EQ(decode_head(logits, 1, v).text, "01");
}

TEST(Scores, MeanExamples) {
  std::vector<double> ones{1, 1, 1}, two{0.5, 0.7}, rev{0.7, 0.5};
  EXPECT_EQ(score_mean(ones), 1.0);
  EXPECT_NEAR(score_mean(two), 0.6, 1e-15);
  EXPECT_EQ(score_mean(two), score_mean(rev));
  EXPECT_THROW(score_mean({}), ProtocolError);
}

TEST(Scores, CumprodExamples) {
  std::vector<double> ones(5, 1.0), c{0.9, 0.8, 0.99};
  EXPECT_EQ(score_cumprod(ones), 1.0);
  EXPECT_NEAR(score_cumprod(c), 0.71280, 1e-9);
  EXPECT_THROW(score_cumprod({}), ProtocolError);
}

TEST(Scores, CumprodBoundedByMinAndMean) {
  std::mt19937_64 rng(2);
  std::uniform_real_distribution<double> u(1e-3, 1.0);
  std::uniform_int_distribution<int> len(1, 27);
  for (int i = 0; i < 1000; ++i) {
    std::vector<double> c(static_cast<std::size_t>(len(rng)));
    for (double& x : c) x = u(rng);
    const double prod = score_cumprod(c);
    EXPECT_LE(prod, *std::min_element(c.begin(), c.end()));
    EXPECT_LE(prod, score_mean(c));
  }
}

TEST(Fuse, ArbitrationRowsReproduceReportedWinners) {
  for (const auto& row : mgp::testing::arbitration_rows()) {
    auto r = fuse(mgp::testing::row_predictions(row), Mode::kCumprod);
    EXPECT_EQ(r.winner.text, row.fused_text) << row.ground_truth;
    EXPECT_EQ(r.winner.score, row.fused_score) << row.ground_truth;
  }
  auto first = fuse(mgp::testing::row_predictions(mgp::testing::arbitration_rows()[0]), Mode::kMean);
  EXPECT_EQ(first.winner.granularity, Granularity::kBpe);
}

TEST(Fuse, TiesPreferCharThenBpe) {
  auto r = fuse({make(Granularity::kWordPiece, "x", 0.5), make(Granularity::kBpe, "x", 0.5),
                 make(Granularity::kChar, "x", 0.5)},
                Mode::kMean);
  EXPECT_EQ(r.winner.granularity, Granularity::kChar);
  r = fuse({make(Granularity::kWordPiece, "y", 0.5), make(Granularity::kBpe, "x", 0.5)}, Mode::kMean);
  EXPECT_EQ(r.winner.granularity, Granularity::kBpe);
  EXPECT_EQ(r.all.front().granularity, Granularity::kBpe);
}

TEST(Fuse, SingleHeadIsIdentityAndEmptyRejected) {
  auto r = fuse({make(Granularity::kChar, "abc", 0.3)}, Mode::kCumprod);
  EXPECT_EQ(r.winner.text, "abc");
  EXPECT_EQ(r.winner.score, 0.3);
  EXPECT_THROW(fuse({}, Mode::kMean), ProtocolError);
}

TEST(Fuse, WinnerInvariantUnderMonotoneRescaling) {
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (int i = 0; i < 500; ++i) {
    std::vector<Prediction> a{make(Granularity::kChar, "c", u(rng)), make(Granularity::kBpe, "b", u(rng)),
                              make(Granularity::kWordPiece, "w", u(rng))};
    auto b = a;
    for (auto& p : b) p.score = std::log(p.score + 1e-9) * 3.0 + 7.0;
    EXPECT_EQ(fuse(a, Mode::kMean).winner.granularity, fuse(b, Mode::kMean).winner.granularity);
  }
}

TEST(OracleUpperBound, AnyCorrectHeadCounts) {
  std::vector<Prediction> p{make(Granularity::kChar, "tabbe", 0.1), make(Granularity::kBpe, "table", 0.9),
                            make(Granularity::kWordPiece, "tablet", 0.5)};
  EXPECT_TRUE(oracle_upper_bound(p, "table"));
  EXPECT_FALSE(oracle_upper_bound(p, "cable"));
}

TEST(OracleUpperBound, BoundsFusedAccuracyOnRandomTriples) {
  std::mt19937_64 rng(4);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  const std::vector<std::string> words{"coffee", "coffe", "cofee", "toffee"};
  std::uniform_int_distribution<std::size_t> pick(0, words.size() - 1);
  std::size_t fused_ok = 0, bound_ok = 0;
  for (int i = 0; i < 1000; ++i) {
    std::vector<Prediction> p{make(Granularity::kChar, words[pick(rng)], u(rng)),
                              make(Granularity::kBpe, words[pick(rng)], u(rng)),
                              make(Granularity::kWordPiece, words[pick(rng)], u(rng))};
    const bool f = fuse(p, Mode::kCumprod).winner.text == "coffee";
    const bool b = oracle_upper_bound(p, "coffee");
    EXPECT_TRUE(!f || b);
    fused_ok += f;
    bound_ok += b;
  }
  EXPECT_LE(fused_ok, bound_ok);
}
