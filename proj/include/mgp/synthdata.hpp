#pragma once

// Seeded word-image generator, lexicons, train/test splits and the on-disk
// dataset format (labels.tsv plus one binary PPM per sample).

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "mgp/tensor.hpp"

namespace mgp::data {

inline constexpr std::size_t kImageH = 32;
inline constexpr std::size_t kImageW = 128;
inline constexpr std::size_t kImageC = 3;
// At one pixel per font column and a one pixel gap, 21 glyphs still fit in
// 128 columns with a one pixel margin.
inline constexpr std::size_t kMaxRenderLength = 21;

struct Sample {
  Tensor<float> image;  // [32, 128, 3] in [0, 1]
  std::string label;
  std::uint64_t seed = 0;
};

// 5x7 glyph rows for one character, most significant of the low 5 bits on
// the left. Throws AlphabetError outside [0-9a-z].
const std::uint8_t* glyph(char c);

// Throws AlphabetError / LengthError for invalid or unrenderable words.
Sample render(std::string_view word, std::uint64_t seed, bool augment);

struct Lexicon {
  std::vector<std::string> words;
  std::vector<double> weights;  // same length as words, positive

  static Lexicon uniform(std::vector<std::string> words);
  // One word per line, optionally followed by a TAB and a weight.
  static Lexicon load(const std::filesystem::path& path);
  void save(const std::filesystem::path& path) const;
  // Nonempty, unique, alphabet-valid, renderable, weights positive.
  void validate() const;
};

// 200 English words of length 2-10 plus 20 digit strings.
Lexicon default_lexicon();

// Images are held quantised to 8 bits, exactly as stored on disk, so that a
// dataset trains identically from memory or from its exported directory.
class Dataset {
 public:
  std::size_t size() const { return labels_.size(); }
  bool empty() const { return labels_.empty(); }
  const std::vector<std::string>& labels() const { return labels_; }
  const std::string& label(std::size_t i) const { return labels_.at(i); }
  const std::vector<std::uint64_t>& seeds() const { return seeds_; }

  void add(const Tensor<float>& image, std::string label, std::uint64_t seed = 0);
  std::span<const std::uint8_t> pixels(std::size_t i) const;
  Tensor<float> image(std::size_t i) const;
  // [B, 32, 128, 3] for the listed samples.
  Tensor<float> batch(std::span<const std::size_t> indices) const;

 private:
  std::vector<std::string> labels_;
  std::vector<std::uint64_t> seeds_;
  std::vector<std::uint8_t> pixels_;
};

// Seed of sample `index` in the train (is_test=false) or test split; the low
// bit keeps the two splits' seeds disjoint.
std::uint64_t sample_seed(std::uint64_t base, std::size_t index, bool is_test);

// Train labels are stratified: counts follow the weights by largest
// remainder, every word at least once when n_train >= |lexicon|, then shuffled.
// Test labels are independent weighted draws.
std::pair<Dataset, Dataset> make_splits(const Lexicon& lexicon, std::size_t n_train, std::size_t n_test,
                                        std::uint64_t seed, bool augment = true);

std::uint8_t quantize(float v);

// Binary PPM (P6, maxval 255) / PGM (P5).
void write_ppm(const std::filesystem::path& path, const Tensor<float>& image);
void write_ppm(const std::filesystem::path& path, std::span<const std::uint8_t> rgb, std::size_t width,
               std::size_t height);
// Throws FormatError on anything but a well-formed 8-bit P6 file.
Tensor<float> read_ppm(const std::filesystem::path& path);
void write_pgm(const std::filesystem::path& path, std::span<const std::uint8_t> gray, std::size_t width,
               std::size_t height);

// dir/labels.tsv ("000000.ppm<TAB>word") plus the images.
void save_dataset(const Dataset& dataset, const std::filesystem::path& dir);
// Images of any size are resampled to 32x128; labels must be alphabet-valid.
Dataset load_dataset(const std::filesystem::path& dir);

}  // namespace mgp::data
