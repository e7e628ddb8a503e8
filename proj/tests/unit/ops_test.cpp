#include <gtest/gtest.h>

#include <cmath>
#include <numeric>
#include <random>

#include "gradcheck.hpp"
#include "mgp/ops.hpp"

using namespace mgp;
using mgp::testing::check_gradients;
using mgp::testing::random_tensor;
using V = Var<double>;

namespace {

V param(Tensor<double> t) { return V::leaf(std::move(t), true); }
V constant(Tensor<double> t) { return V::leaf(std::move(t), false); }

// Projects an op output onto a fixed random tensor so every output element
// contributes to the scalar under test.
Tensor<double> projection(const Shape& s, std::uint64_t seed) {
  std::mt19937_64 rng(seed ^ 0x9e3779b97f4a7c15ULL);
  return random_tensor(s, rng);
}

constexpr double kTol = 1e-3;
constexpr int kSeeds = 100;

}  // namespace

TEST(Matmul, IdentityLeavesOperandUnchanged) {
  Tensor<double> eye({3, 3});
  for (int i = 0; i < 3; ++i) eye.at(i, i) = 1.0;
  std::mt19937_64 rng(1);
  auto b = random_tensor({3, 4}, rng);
  EXPECT_EQ(nn::matmul(constant(eye), constant(b)).value(), b);
}

TEST(Matmul, HandEvaluatedProduct) {
  Tensor<double> a({2, 2}, {1, 2, 3, 4});
  Tensor<double> b({2, 1}, {0, 1});
  auto c = nn::matmul(constant(a), constant(b)).value();
  EXPECT_EQ(c.shape(), (Shape{2, 1}));
  EXPECT_EQ(c[0], 2.0);
  EXPECT_EQ(c[1], 4.0);
}

TEST(Matmul, InnerExtentMismatchIsDimensionError) {
  EXPECT_THROW(nn::matmul(constant(Tensor<double>({2, 3})), constant(Tensor<double>({2, 3}))),
               DimensionError);
}

TEST(Matmul, GradientOfSumIsRowSumsOfRightOperand) {
  std::mt19937_64 rng(2);
  auto a = param(random_tensor({3, 4}, rng));
  auto b = constant(random_tensor({4, 5}, rng));
  nn::sum(nn::matmul(a, b)).backward();
  for (std::size_t i = 0; i < 3; ++i) {
    for (std::size_t kk = 0; kk < 4; ++kk) {
      double row = 0;
      for (std::size_t j = 0; j < 5; ++j) row += b.value().at(kk, j);
      EXPECT_NEAR(a.grad().at(i, kk), row, 1e-12);
    }
  }
  auto rep = check_gradients([&] { return nn::sum(nn::matmul(a, b)); }, {{"a", a}});
  EXPECT_LT(rep.max_rel_error, 1e-4) << rep.worst;
}

TEST(Matmul, BatchedTransposedGradientsMatchFiniteDifferences) {
  for (int seed = 0; seed < kSeeds; ++seed) {
    std::mt19937_64 rng(seed);
    const auto ta = seed % 2 ? nn::Trans::kYes : nn::Trans::kNo;
    const auto tb = (seed / 2) % 2 ? nn::Trans::kYes : nn::Trans::kNo;
    auto a = param(random_tensor(ta == nn::Trans::kNo ? Shape{2, 3, 4} : Shape{2, 4, 3}, rng));
    auto b = param(random_tensor(tb == nn::Trans::kNo ? Shape{2, 4, 5} : Shape{2, 5, 4}, rng));
    auto w = projection({2, 3, 5}, seed);
    auto rep = check_gradients([&] { return nn::weighted_sum(nn::bmm(a, b, ta, tb), w); },
                               {{"a", a}, {"b", b}});
    ASSERT_LT(rep.max_rel_error, kTol) << "seed " << seed << " " << rep.worst;
  }
}

TEST(Linear, BothLayoutsMatchFiniteDifferences) {
  for (int seed = 0; seed < kSeeds; ++seed) {
    std::mt19937_64 rng(seed);
    const bool out_in = seed % 2;
    auto x = param(random_tensor({2, 3, 4}, rng));
    auto w = param(random_tensor(out_in ? Shape{6, 4} : Shape{4, 6}, rng));
    auto b = param(random_tensor({6}, rng));
    auto proj = projection({2, 3, 6}, seed);
    const auto layout = out_in ? nn::WeightLayout::kOutIn : nn::WeightLayout::kInOut;
    auto rep = check_gradients([&] { return nn::weighted_sum(nn::linear(x, w, b, layout), proj); },
                               {{"x", x}, {"w", w}, {"b", b}});
    ASSERT_LT(rep.max_rel_error, kTol) << "seed " << seed << " " << rep.worst;
  }
}

TEST(Softmax, UniformInputGivesUniformOutput) {
  auto y = nn::softmax(constant(Tensor<double>({3}, {0, 0, 0})), 0).value();
  for (double v : y.data()) EXPECT_NEAR(v, 1.0 / 3.0, 1e-15);
}

TEST(Softmax, LargeLogitsDoNotOverflow) {
  auto y = nn::softmax(V::leaf(Tensor<double>({2}, {1000, 0})), 0).value();
  EXPECT_TRUE(y.all_finite());
  EXPECT_NEAR(y[0], 1.0, 1e-12);
  EXPECT_NEAR(y[1], 0.0, 1e-12);
  auto yf = nn::softmax(Var<float>::leaf(Tensor<float>({2}, {1000.f, 0.f})), 0).value();
  EXPECT_TRUE(yf.all_finite());
  EXPECT_FLOAT_EQ(yf[0], 1.f);
}

TEST(Softmax, RowsSumToOneAndShiftInvariant) {
  for (int seed = 0; seed < kSeeds; ++seed) {
    std::mt19937_64 rng(seed);
    auto x = random_tensor({4, 6, 5}, rng, 3.0);
    for (int axis : {0, 1, 2, -1}) {
      auto y = nn::softmax(constant(x), axis).value();
      auto shifted = x;
      for (double& v : shifted.data()) v += 17.25;
      auto ys = nn::softmax(constant(shifted), axis).value();
      const std::size_t ax = axis < 0 ? 2 : static_cast<std::size_t>(axis);
      const Shape& s = x.shape();
      std::size_t inner = 1;
      for (std::size_t i = ax + 1; i < 3; ++i) inner *= s[i];
      const std::size_t outer = y.size() / (s[ax] * inner);
      for (std::size_t o = 0; o < outer; ++o) {
        for (std::size_t in = 0; in < inner; ++in) {
          double total = 0;
          for (std::size_t i = 0; i < s[ax]; ++i) {
            const double v = y[(o * s[ax] + i) * inner + in];
            ASSERT_GT(v, 0.0);
            ASSERT_LT(v, 1.0);
            total += v;
          }
          ASSERT_NEAR(total, 1.0, 1e-6);
        }
      }
      for (std::size_t i = 0; i < y.size(); ++i) ASSERT_NEAR(y[i], ys[i], 1e-12);
    }
  }
}

TEST(Softmax, GradientMatchesFiniteDifferences) {
  for (int seed = 0; seed < kSeeds; ++seed) {
    std::mt19937_64 rng(seed);
    auto x = param(random_tensor({3, 4, 5}, rng));
    const int axis = seed % 3;
    auto w = projection({3, 4, 5}, seed);
    auto rep = check_gradients([&] { return nn::weighted_sum(nn::softmax(x, axis), w); }, {{"x", x}});
    ASSERT_LT(rep.max_rel_error, 1e-4) << "seed " << seed << " " << rep.worst;
  }
}

TEST(LayerNorm, ConstantRowNormalizesToZero) {
  auto g = constant(Tensor<double>({4}, 1.0));
  auto b = constant(Tensor<double>({4}, 0.0));
  auto y = nn::layer_norm(constant(Tensor<double>({1, 4}, 2.5)), g, b).value();
  for (double v : y.data()) EXPECT_EQ(v, 0.0);
}

TEST(LayerNorm, TwoElementRowMapsToMinusOneOne) {
  auto g = constant(Tensor<double>({2}, 1.0));
  auto b = constant(Tensor<double>({2}, 0.0));
  auto y = nn::layer_norm(constant(Tensor<double>({1, 2}, {1, 3})), g, b, 1e-15).value();
  EXPECT_NEAR(y[0], -1.0, 1e-12);
  EXPECT_NEAR(y[1], 1.0, 1e-12);
}

TEST(LayerNorm, OutputRowsHaveZeroMeanUnitVariance) {
  std::mt19937_64 rng(3);
  auto g = constant(Tensor<double>({16}, 1.0));
  auto b = constant(Tensor<double>({16}, 0.0));
  auto y = nn::layer_norm(constant(random_tensor({10, 16}, rng, 5.0)), g, b).value();
  for (std::size_t r = 0; r < 10; ++r) {
    double mean = 0, var = 0;
    for (std::size_t j = 0; j < 16; ++j) mean += y.at(r, j);
    mean /= 16;
    for (std::size_t j = 0; j < 16; ++j) var += (y.at(r, j) - mean) * (y.at(r, j) - mean);
    var /= 16;
    EXPECT_NEAR(mean, 0.0, 1e-5);
    EXPECT_NEAR(var, 1.0, 1e-4);
  }
}

TEST(LayerNorm, GradientMatchesFiniteDifferences) {
  for (int seed = 0; seed < kSeeds; ++seed) {
    std::mt19937_64 rng(seed);
    auto x = param(random_tensor({2, 3, 6}, rng));
    auto g = param(random_tensor({6}, rng));
    auto b = param(random_tensor({6}, rng));
    auto w = projection({2, 3, 6}, seed);
    auto rep = check_gradients([&] { return nn::weighted_sum(nn::layer_norm(x, g, b), w); },
                               {{"x", x}, {"gamma", g}, {"beta", b}});
    ASSERT_LT(rep.max_rel_error, 1e-4) << "seed " << seed << " " << rep.worst;
  }
}

TEST(LayerNorm, WidthMismatchIsDimensionError) {
  EXPECT_THROW(nn::layer_norm(constant(Tensor<double>({2, 3})), constant(Tensor<double>({4}, 1.0)),
                              constant(Tensor<double>({4}))),
               DimensionError);
}

TEST(Gelu, KnownValues) {
  auto y = nn::gelu(constant(Tensor<double>({4}, {0.0, 1.0, 30.0, -30.0}))).value();
  EXPECT_EQ(y[0], 0.0);
  // Phi(1) from the erf definition.
  EXPECT_NEAR(y[1], 0.5 * (1.0 + std::erf(1.0 / std::sqrt(2.0))), 1e-15);
  EXPECT_NEAR(y[1], 0.8413, 1e-4);
  EXPECT_NEAR(y[2], 30.0, 1e-9);
  EXPECT_NEAR(y[3], 0.0, 1e-9);
}

TEST(Gelu, MonotoneOnNonNegativeAxis) {
  Tensor<double> x({200});
  for (std::size_t i = 0; i < 200; ++i) x[i] = 0.05 * static_cast<double>(i);
  auto y = nn::gelu(constant(x)).value();
  for (std::size_t i = 1; i < 200; ++i) EXPECT_GT(y[i], y[i - 1]);
}

TEST(Gelu, GradientMatchesFiniteDifferences) {
  for (int seed = 0; seed < kSeeds; ++seed) {
    std::mt19937_64 rng(seed);
    auto x = param(random_tensor({5, 7}, rng, 2.0));
    auto w = projection({5, 7}, seed);
    auto rep = check_gradients([&] { return nn::weighted_sum(nn::gelu(x), w); }, {{"x", x}});
    ASSERT_LT(rep.max_rel_error, 1e-4) << "seed " << seed << " " << rep.worst;
  }
}

TEST(CrossEntropy, UniformLogitsGiveLogK) {
  std::vector<std::int32_t> targets{0, 5, 37};
  auto loss = nn::cross_entropy(constant(Tensor<double>({3, 38})), targets).value().item();
  EXPECT_NEAR(loss, std::log(38.0), 1e-12);
  EXPECT_NEAR(loss, 3.6376, 1e-4);
}

TEST(CrossEntropy, ConfidentCorrectLogitApproachesZero) {
  double previous = 1e9;
  for (double mag : {1.0, 5.0, 20.0, 80.0}) {
    Tensor<double> logits({1, 5});
    logits[2] = mag;
    std::vector<std::int32_t> t{2};
    const double loss = nn::cross_entropy(constant(logits), t).value().item();
    EXPECT_LT(loss, previous);
    previous = loss;
  }
  EXPECT_LT(previous, 1e-30);
}

TEST(CrossEntropy, OutOfRangeTargetIsLabelError) {
  std::vector<std::int32_t> t{0, 5};
  EXPECT_THROW(nn::cross_entropy(constant(Tensor<double>({2, 5})), t), LabelError);
  std::vector<std::int32_t> neg{-1, 0};
  EXPECT_THROW(nn::cross_entropy(constant(Tensor<double>({2, 5})), neg), LabelError);
}

TEST(CrossEntropy, IgnoredRowsDropOutOfTheMean) {
  Tensor<double> logits({2, 3});
  logits.at(0, 1) = 2.0;
  // Target 0 doubles as the ignore id, so only row 0 counts.
  std::vector<std::int32_t> targets{1, 0};
  const double masked = nn::cross_entropy(constant(logits), targets, 0).value().item();
  Tensor<double> row({1, 3}, {0, 2, 0});
  std::vector<std::int32_t> one{1};
  EXPECT_NEAR(masked, nn::cross_entropy(constant(row), one).value().item(), 1e-15);
}

TEST(CrossEntropy, GradientMatchesFiniteDifferences) {
  for (int seed = 0; seed < kSeeds; ++seed) {
    std::mt19937_64 rng(seed);
    auto logits = param(random_tensor({3, 5}, rng, 2.0));
    std::uniform_int_distribution<int> pick(0, 4);
    std::vector<std::int32_t> t{pick(rng), pick(rng), pick(rng)};
    auto rep = check_gradients([&] { return nn::cross_entropy(logits, t); }, {{"logits", logits}});
    ASSERT_LT(rep.max_rel_error, 1e-4) << "seed " << seed << " " << rep.worst;
  }
}

namespace {

nn::AttentionParams<double> random_attention(std::size_t d, std::mt19937_64& rng, double s = 0.5) {
  return {param(random_tensor({d, d}, rng, s)), param(random_tensor({d}, rng, s)),
          param(random_tensor({d, d}, rng, s)), param(random_tensor({d}, rng, s)),
          param(random_tensor({d, d}, rng, s)), param(random_tensor({d}, rng, s)),
          param(random_tensor({d, d}, rng, s)), param(random_tensor({d}, rng, s))};
}

}  // namespace

TEST(Attention, ZeroProjectionsGiveZeroOutput) {
  const std::size_t d = 6;
  nn::AttentionParams<double> p;
  for (V* v : {&p.q_weight, &p.k_weight, &p.v_weight, &p.out_weight}) *v = param(Tensor<double>({d, d}));
  for (V* v : {&p.q_bias, &p.k_bias, &p.v_bias, &p.out_bias}) *v = param(Tensor<double>({d}));
  std::mt19937_64 rng(4);
  auto y = nn::multi_head_self_attention(constant(random_tensor({5, d}, rng)), p, 2).value();
  for (double v : y.data()) EXPECT_EQ(v, 0.0);
}

TEST(Attention, SingleTokenAttendsOnlyToItself) {
  const std::size_t d = 6;
  std::mt19937_64 rng(5);
  auto p = random_attention(d, rng);
  auto x = constant(random_tensor({1, d}, rng));
  auto y = nn::multi_head_self_attention(x, p, 3).value();
  // With weight exactly 1 on the only token, the context is just the value projection.
  auto expected = nn::linear(nn::linear(x, p.v_weight, p.v_bias), p.out_weight, p.out_bias).value();
  for (std::size_t i = 0; i < d; ++i) EXPECT_NEAR(y[i], expected[i], 1e-14);
}

TEST(Attention, PermutingRowsPermutesOutput) {
  const std::size_t d = 6, s = 4;
  std::mt19937_64 rng(6);
  auto p = random_attention(d, rng);
  auto x = random_tensor({s, d}, rng);
  const std::vector<std::size_t> perm{2, 0, 3, 1};
  Tensor<double> xp({s, d});
  for (std::size_t i = 0; i < s; ++i) {
    for (std::size_t j = 0; j < d; ++j) xp.at(i, j) = x.at(perm[i], j);
  }
  auto y = nn::multi_head_self_attention(constant(x), p, 2).value();
  auto yp = nn::multi_head_self_attention(constant(xp), p, 2).value();
  for (std::size_t i = 0; i < s; ++i) {
    for (std::size_t j = 0; j < d; ++j) EXPECT_NEAR(yp.at(i, j), y.at(perm[i], j), 1e-12);
  }
}

TEST(Attention, IndivisibleWidthIsConfigError) {
  std::mt19937_64 rng(7);
  auto p = random_attention(6, rng);
  EXPECT_THROW(nn::multi_head_self_attention(constant(random_tensor({3, 6}, rng)), p, 4), ConfigError);
}

TEST(Attention, GradientMatchesFiniteDifferences) {
  for (int seed = 0; seed < kSeeds; ++seed) {
    std::mt19937_64 rng(seed);
    const std::size_t d = 6;
    auto p = random_attention(d, rng);
    auto x = param(random_tensor({2, 4, d}, rng));
    auto w = projection({2, 4, d}, seed);
    auto rep = check_gradients(
        [&] { return nn::weighted_sum(nn::multi_head_self_attention(x, p, 2), w); },
        {{"x", x}, {"q_w", p.q_weight}, {"q_b", p.q_bias}, {"k_w", p.k_weight}, {"k_b", p.k_bias},
         {"v_w", p.v_weight}, {"v_b", p.v_bias}, {"o_w", p.out_weight}, {"o_b", p.out_bias}},
        1e-4, 6, seed);
    ASSERT_LT(rep.max_rel_error, kTol) << "seed " << seed << " " << rep.worst;
  }
}

TEST(Structural, PrependRowAndBroadcastAddGradients) {
  for (int seed = 0; seed < kSeeds; ++seed) {
    std::mt19937_64 rng(seed);
    auto x = param(random_tensor({2, 3, 4}, rng));
    auto row = param(random_tensor({1, 4}, rng));
    auto pos = param(random_tensor({4, 4}, rng));
    auto w = projection({2, 4, 4}, seed);
    auto rep = check_gradients(
        [&] { return nn::weighted_sum(nn::add_broadcast(nn::prepend_row(x, row), pos), w); },
        {{"x", x}, {"row", row}, {"pos", pos}});
    ASSERT_LT(rep.max_rel_error, 1e-6) << rep.worst;
  }
}

TEST(Determinism, RepeatedOpsAreBitIdentical) {
  std::mt19937_64 rng(8);
  auto p = random_attention(6, rng);
  auto x = constant(random_tensor({3, 5, 6}, rng));
  auto a = nn::multi_head_self_attention(x, p, 3).value();
  auto b = nn::multi_head_self_attention(x, p, 3).value();
  EXPECT_EQ(a, b);
}

TEST(NoGrad, GuardSkipsGraphConstruction) {
  auto a = param(Tensor<double>({2, 2}, 1.0));
  NoGradGuard guard;
  auto y = nn::sum(nn::matmul(a, a));
  EXPECT_FALSE(y.requires_grad());
}
