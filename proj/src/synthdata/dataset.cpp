#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "mgp/errors.hpp"
#include "mgp/random.hpp"
#include "mgp/synthdata.hpp"
#include "mgp/tokenizers.hpp"

namespace mgp::data {

namespace {

constexpr std::size_t kPixelsPerImage = kImageH * kImageW * kImageC;

// Bilinear resample of an [h, w, 3] tensor onto the model grid.
Tensor<float> resize_to_model(const Tensor<float>& src) {
  const std::size_t h = src.dim(0), w = src.dim(1);
  Tensor<float> out({kImageH, kImageW, kImageC});
  const double sy = static_cast<double>(h) / kImageH, sx = static_cast<double>(w) / kImageW;
  for (std::size_t y = 0; y < kImageH; ++y) {
    const double fy = std::clamp((y + 0.5) * sy - 0.5, 0.0, static_cast<double>(h - 1));
    const auto y0 = static_cast<std::size_t>(fy);
    const std::size_t y1 = std::min(y0 + 1, h - 1);
    const double ty = fy - static_cast<double>(y0);
    for (std::size_t x = 0; x < kImageW; ++x) {
      const double fx = std::clamp((x + 0.5) * sx - 0.5, 0.0, static_cast<double>(w - 1));
      const auto x0 = static_cast<std::size_t>(fx);
      const std::size_t x1 = std::min(x0 + 1, w - 1);
      const double tx = fx - static_cast<double>(x0);
      for (std::size_t c = 0; c < kImageC; ++c) {
        auto px = [&](std::size_t yy, std::size_t xx) { return static_cast<double>(src[(yy * w + xx) * kImageC + c]); };
        const double top = px(y0, x0) * (1 - tx) + px(y0, x1) * tx;
        const double bot = px(y1, x0) * (1 - tx) + px(y1, x1) * tx;
        out[(y * kImageW + x) * kImageC + c] = static_cast<float>(top * (1 - ty) + bot * ty);
      }
    }
  }
  return out;
}

std::string read_token(std::istream& in, const std::filesystem::path& path) {
  std::string tok;
  for (;;) {
    const int c = in.get();
    if (c == EOF) throw FormatError(path.string() + ": truncated PPM header");
    if (c == '#') {
      std::string skip;
      std::getline(in, skip);
      if (!tok.empty()) return tok;
      continue;
    }
    if (std::isspace(c)) {
      if (!tok.empty()) return tok;
      continue;
    }
    tok.push_back(static_cast<char>(c));
  }
}

std::size_t header_number(std::istream& in, const std::filesystem::path& path) {
  const std::string t = read_token(in, path);
  if (t.empty() || t.size() > 9 || !std::all_of(t.begin(), t.end(), [](char c) { return c >= '0' && c <= '9'; })) {
    throw FormatError(path.string() + ": bad PPM header field '" + t + "'");
  }
  return static_cast<std::size_t>(std::stoul(t));
}

void write_binary(const std::filesystem::path& path, const char* magic, std::span<const std::uint8_t> bytes,
                  std::size_t width, std::size_t height) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path.string());
  out << magic << '\n' << width << ' ' << height << "\n255\n";
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw IoError("write failed for " + path.string());
}

std::string image_name(std::size_t i) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%06zu.ppm", i);
  return buf;
}

}  // namespace

void Dataset::add(const Tensor<float>& image, std::string label, std::uint64_t seed) {
  if (image.shape() != Shape{kImageH, kImageW, kImageC}) {
    throw DimensionError("dataset image must be [32, 128, 3], got " + shape_str(image.shape()));
  }
  tok::require_alphabet(label);
  for (float v : image.data()) pixels_.push_back(quantize(v));
  labels_.push_back(std::move(label));
  seeds_.push_back(seed);
}

std::span<const std::uint8_t> Dataset::pixels(std::size_t i) const {
  if (i >= size()) throw DimensionError("dataset index " + std::to_string(i) + " out of range");
  return std::span<const std::uint8_t>(pixels_).subspan(i * kPixelsPerImage, kPixelsPerImage);
}

Tensor<float> Dataset::image(std::size_t i) const {
  auto px = pixels(i);
  Tensor<float> t({kImageH, kImageW, kImageC});
  for (std::size_t k = 0; k < kPixelsPerImage; ++k) t[k] = static_cast<float>(px[k]) / 255.0f;
  return t;
}

Tensor<float> Dataset::batch(std::span<const std::size_t> indices) const {
  Tensor<float> t({indices.size(), kImageH, kImageW, kImageC});
  for (std::size_t b = 0; b < indices.size(); ++b) {
    auto px = pixels(indices[b]);
    for (std::size_t k = 0; k < kPixelsPerImage; ++k) t[b * kPixelsPerImage + k] = static_cast<float>(px[k]) / 255.0f;
  }
  return t;
}

std::uint64_t sample_seed(std::uint64_t base, std::size_t index, bool is_test) {
  return (base << 32) ^ ((static_cast<std::uint64_t>(index) << 1) | (is_test ? 1u : 0u));
}

std::pair<Dataset, Dataset> make_splits(const Lexicon& lexicon, std::size_t n_train, std::size_t n_test,
                                        std::uint64_t seed, bool augment) {
  lexicon.validate();
  const std::size_t n = lexicon.words.size();
  double total = 0.0;
  for (double w : lexicon.weights) total += w;

  // Largest-remainder apportionment, after reserving one slot per word when
  // there is room for every word.
  std::vector<std::size_t> counts(n, 0);
  std::size_t budget = n_train;
  if (n_train >= n) {
    std::fill(counts.begin(), counts.end(), 1);
    budget -= n;
  }
  std::vector<std::pair<double, std::size_t>> remainders(n);
  std::size_t assigned = 0;
  for (std::size_t i = 0; i < n; ++i) {
    const double exact = static_cast<double>(budget) * lexicon.weights[i] / total;
    const auto whole = static_cast<std::size_t>(std::floor(exact));
    counts[i] += whole;
    assigned += whole;
    remainders[i] = {exact - static_cast<double>(whole), i};
  }
  std::stable_sort(remainders.begin(), remainders.end(),
                   [](const auto& a, const auto& b) { return a.first > b.first; });
  for (std::size_t k = 0; assigned < budget; ++k, ++assigned) ++counts[remainders[k % n].second];

  std::vector<std::size_t> train_words;
  train_words.reserve(n_train);
  for (std::size_t i = 0; i < n; ++i) train_words.insert(train_words.end(), counts[i], i);
  Rng rng(mix_seed(seed, "splits"));
  shuffle(train_words.begin(), train_words.end(), rng);

  std::vector<double> cdf(n);
  double acc = 0.0;
  for (std::size_t i = 0; i < n; ++i) cdf[i] = (acc += lexicon.weights[i] / total);
  std::vector<std::size_t> test_words(n_test);
  for (auto& w : test_words) {
    const double u = rng.uniform();
    w = std::min<std::size_t>(static_cast<std::size_t>(std::lower_bound(cdf.begin(), cdf.end(), u) - cdf.begin()), n - 1);
  }

  auto build = [&](const std::vector<std::size_t>& words, bool is_test) {
    std::vector<Sample> samples(words.size());
#pragma omp parallel for schedule(dynamic, 16)
    for (std::size_t i = 0; i < words.size(); ++i) {
      samples[i] = render(lexicon.words[words[i]], sample_seed(seed, i, is_test), augment);
    }
    Dataset d;
    for (auto& s : samples) d.add(s.image, std::move(s.label), s.seed);
    return d;
  };
  return {build(train_words, false), build(test_words, true)};
}

std::uint8_t quantize(float v) {
  const float c = std::clamp(std::isfinite(v) ? v : 0.0f, 0.0f, 1.0f);
  return static_cast<std::uint8_t>(std::lround(c * 255.0f));
}

void write_ppm(const std::filesystem::path& path, const Tensor<float>& image) {
  if (image.rank() != 3 || image.dim(2) != 3) {
    throw DimensionError("PPM export needs [H, W, 3], got " + shape_str(image.shape()));
  }
  std::vector<std::uint8_t> bytes(image.size());
  for (std::size_t i = 0; i < bytes.size(); ++i) bytes[i] = quantize(image[i]);
  write_ppm(path, bytes, image.dim(1), image.dim(0));
}

void write_ppm(const std::filesystem::path& path, std::span<const std::uint8_t> rgb, std::size_t width,
               std::size_t height) {
  if (rgb.size() != width * height * 3) throw DimensionError("PPM byte count does not match size");
  write_binary(path, "P6", rgb, width, height);
}

void write_pgm(const std::filesystem::path& path, std::span<const std::uint8_t> gray, std::size_t width,
               std::size_t height) {
  if (gray.size() != width * height) throw DimensionError("PGM byte count does not match size");
  write_binary(path, "P5", gray, width, height);
}

Tensor<float> read_ppm(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  if (read_token(in, path) != "P6") throw FormatError(path.string() + ": not a binary PPM (P6)");
  const std::size_t w = header_number(in, path), h = header_number(in, path), maxval = header_number(in, path);
  if (w == 0 || h == 0 || w > 1 << 16 || h > 1 << 16) throw FormatError(path.string() + ": bad PPM dimensions");
  if (maxval != 255) throw FormatError(path.string() + ": only 8-bit PPM is supported");
  std::vector<std::uint8_t> bytes(w * h * 3);
  in.read(reinterpret_cast<char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (static_cast<std::size_t>(in.gcount()) != bytes.size()) {
    throw FormatError(path.string() + ": truncated pixel data at byte offset " + std::to_string(in.gcount()));
  }
  Tensor<float> t({h, w, 3});
  for (std::size_t i = 0; i < bytes.size(); ++i) t[i] = static_cast<float>(bytes[i]) / 255.0f;
  return t;
}

void save_dataset(const Dataset& dataset, const std::filesystem::path& dir) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw IoError("cannot create " + dir.string() + ": " + ec.message());
  std::ofstream labels(dir / "labels.tsv");
  if (!labels) throw IoError("cannot write " + (dir / "labels.tsv").string());
  for (std::size_t i = 0; i < dataset.size(); ++i) {
    const std::string name = image_name(i);
    write_ppm(dir / name, dataset.pixels(i), kImageW, kImageH);
    labels << name << '\t' << dataset.label(i) << '\n';
  }
  if (!labels) throw IoError("write failed for " + (dir / "labels.tsv").string());
}

Dataset load_dataset(const std::filesystem::path& dir) {
  const auto tsv = dir / "labels.tsv";
  std::ifstream in(tsv);
  if (!in) throw IoError("cannot open " + tsv.string());
  Dataset d;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    const auto tab = line.find('\t');
    if (tab == std::string::npos || tab == 0) {
      throw FormatError(tsv.string() + ":" + std::to_string(lineno) + ": expected 'file<TAB>label'");
    }
    Tensor<float> img = read_ppm(dir / line.substr(0, tab));
    if (img.dim(0) != kImageH || img.dim(1) != kImageW) img = resize_to_model(img);
    d.add(img, line.substr(tab + 1), 0);
  }
  return d;
}

}  // namespace mgp::data
