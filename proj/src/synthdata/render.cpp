#include <algorithm>
#include <cmath>

#include "mgp/errors.hpp"
#include "mgp/random.hpp"
#include "mgp/synthdata.hpp"
#include "mgp/tokenizers.hpp"

namespace mgp::data {

namespace {

constexpr std::size_t kGlyphW = 5;
constexpr std::size_t kGlyphH = 7;
constexpr std::size_t kMargin = 1;
constexpr double kMaxNoiseSigma = 0.05;
constexpr double kMaxRotationDeg = 5.0;

struct Layout {
  std::size_t sx = 1;             // pixels per font column
  std::size_t sy = 3;             // pixels per font row
  std::vector<std::size_t> gaps;  // pixels between consecutive glyphs
  std::size_t width = 0;          // total ink-box width
};

std::size_t layout_width(std::size_t n, const Layout& l) {
  std::size_t w = n * kGlyphW * l.sx;
  for (std::size_t g : l.gaps) w += g;
  return w;
}

// Horizontal scale is the largest integer (at most 4) that fits with unit
// gaps, optionally one step smaller; gaps jitter in [0.6, 1.4] font columns
// and give back pixels from the widest gap first when the row overflows.
Layout choose_layout(std::size_t n, Rng& rng) {
  const std::size_t avail = kImageW - 2 * kMargin;
  Layout l;
  std::size_t fit = avail / (kGlyphW * n + (n - 1));
  fit = std::min<std::size_t>(fit, 4);
  l.sx = fit;
  if (fit > 1 && rng.uniform() < 0.5) l.sx = fit - 1;
  l.sy = rng.uniform() < 0.5 ? 3 : 4;
  l.gaps.resize(n > 0 ? n - 1 : 0);
  for (auto& g : l.gaps) {
    g = static_cast<std::size_t>(std::lround(rng.uniform(0.6, 1.4) * static_cast<double>(l.sx)));
    g = std::max<std::size_t>(g, 1);
  }
  while (layout_width(n, l) > avail) {
    auto widest = std::max_element(l.gaps.begin(), l.gaps.end());
    if (widest == l.gaps.end() || *widest <= 1) break;
    --*widest;
  }
  l.width = layout_width(n, l);
  return l;
}

void rotate(Tensor<float>& img, double degrees) {
  const double a = degrees * 3.14159265358979323846 / 180.0, ca = std::cos(a), sa = std::sin(a);
  const double cy = (kImageH - 1) / 2.0, cx = (kImageW - 1) / 2.0;
  Tensor<float> src = img;
  for (std::size_t y = 0; y < kImageH; ++y) {
    for (std::size_t x = 0; x < kImageW; ++x) {
      // Inverse map each destination pixel; nearest neighbour, white outside.
      const double dx = static_cast<double>(x) - cx, dy = static_cast<double>(y) - cy;
      const long sx = std::lround(ca * dx + sa * dy + cx), sy = std::lround(-sa * dx + ca * dy + cy);
      const bool inside = sx >= 0 && sy >= 0 && sx < static_cast<long>(kImageW) && sy < static_cast<long>(kImageH);
      for (std::size_t c = 0; c < kImageC; ++c) {
        img[(y * kImageW + x) * kImageC + c] =
            inside ? src[(static_cast<std::size_t>(sy) * kImageW + static_cast<std::size_t>(sx)) * kImageC + c] : 1.0f;
      }
    }
  }
}

}  // namespace

Sample render(std::string_view word, std::uint64_t seed, bool augment) {
  tok::require_alphabet(word);
  if (word.size() > kMaxRenderLength) {
    throw LengthError("word of " + std::to_string(word.size()) + " characters does not fit (max " +
                      std::to_string(kMaxRenderLength) + ")");
  }
  Rng rng(seed);
  const std::size_t n = word.size();
  const Layout l = choose_layout(n, rng);
  const std::size_t glyph_h = kGlyphH * l.sy;
  const auto x0 = static_cast<std::size_t>(rng.uniform_int(kMargin, static_cast<std::int64_t>(kImageW - kMargin - l.width)));
  const auto y0 = static_cast<std::size_t>(rng.uniform_int(kMargin, static_cast<std::int64_t>(kImageH - kMargin - glyph_h)));

  Sample s{Tensor<float>({kImageH, kImageW, kImageC}, 1.0f), std::string(word), seed};
  std::size_t x = x0;
  for (std::size_t i = 0; i < n; ++i) {
    const std::uint8_t* rows = glyph(word[i]);
    for (std::size_t r = 0; r < kGlyphH; ++r) {
      for (std::size_t col = 0; col < kGlyphW; ++col) {
        if (!((rows[r] >> (kGlyphW - 1 - col)) & 1u)) continue;
        for (std::size_t py = 0; py < l.sy; ++py) {
          for (std::size_t px = 0; px < l.sx; ++px) {
            const std::size_t yy = y0 + r * l.sy + py, xx = x + col * l.sx + px;
            for (std::size_t c = 0; c < kImageC; ++c) s.image[(yy * kImageW + xx) * kImageC + c] = 0.0f;
          }
        }
      }
    }
    x += kGlyphW * l.sx + (i + 1 < n ? l.gaps[i] : 0);
  }

  if (augment) {
    rotate(s.image, rng.uniform(-kMaxRotationDeg, kMaxRotationDeg));
    const double sigma = rng.uniform(0.0, kMaxNoiseSigma);
    for (float& v : s.image.data()) v = std::clamp(static_cast<float>(v + sigma * rng.normal()), 0.0f, 1.0f);
  }
  return s;
}

}  // namespace mgp::data
