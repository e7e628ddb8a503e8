#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>

#include "mgp/errors.hpp"
#include "mgp/trainer.hpp"

namespace mgp::train {

namespace {

constexpr char kMagic[4] = {'M', 'G', 'P', 'C'};
constexpr std::size_t kMaxRank = 4;

class Writer {
 public:
  template <typename U>
  void put(U v) {
    for (std::size_t i = 0; i < sizeof(U); ++i) bytes_.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
  }
  void put_bytes(const std::string& s) { bytes_.insert(bytes_.end(), s.begin(), s.end()); }
  void put_f32(float f) { put(std::bit_cast<std::uint32_t>(f)); }
  const std::vector<char>& bytes() const { return bytes_; }

 private:
  std::vector<char> bytes_;
};

class Reader {
 public:
  Reader(std::vector<char> bytes, std::string source) : bytes_(std::move(bytes)), source_(std::move(source)) {}

  template <typename U>
  U get(const char* what) {
    need(sizeof(U), what);
    U v = 0;
    for (std::size_t i = 0; i < sizeof(U); ++i) {
      v |= static_cast<U>(static_cast<unsigned char>(bytes_[pos_ + i])) << (8 * i);
    }
    pos_ += sizeof(U);
    return v;
  }
  std::string get_bytes(std::size_t n, const char* what) {
    need(n, what);
    std::string s(bytes_.data() + pos_, n);
    pos_ += n;
    return s;
  }
  [[noreturn]] void fail(const std::string& msg) const {
    throw FormatError(source_ + ": " + msg + " at offset " + std::to_string(pos_));
  }
  std::size_t pos() const { return pos_; }
  bool done() const { return pos_ == bytes_.size(); }
  std::size_t remaining() const { return bytes_.size() - pos_; }

 private:
  void need(std::size_t n, const char* what) const {
    if (remaining() < n) {
      fail(std::string("truncated ") + what + " (need " + std::to_string(n) + " bytes, have " +
           std::to_string(remaining()) + ")");
    }
  }

  std::vector<char> bytes_;
  std::string source_;
  std::size_t pos_ = 0;
};

void put_string16(Writer& w, const std::string& s) {
  if (s.size() > 0xffff) throw FormatError("checkpoint string longer than 65535 bytes");
  w.put(static_cast<std::uint16_t>(s.size()));
  w.put_bytes(s);
}

// Sidecar files written beside the checkpoint, keyed in the metadata table.
struct Sidecar {
  const char* key;
  Granularity granularity;
  bool merges;
};
constexpr Sidecar kSidecars[] = {
    {"sidecar.bpe.vocab", Granularity::kBpe, false},
    {"sidecar.bpe.merges", Granularity::kBpe, true},
    {"sidecar.wordpiece.vocab", Granularity::kWordPiece, false},
};

std::string sidecar_name(const std::filesystem::path& ckpt, const Sidecar& s) {
  return ckpt.stem().string() + "." + std::string(tok::to_string(s.granularity)) + (s.merges ? ".merges.json" : ".vocab.json");
}

}  // namespace

void write_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt) {
  Writer w;
  w.put_bytes(std::string(kMagic, 4));
  w.put(kCheckpointVersion);
  w.put(static_cast<std::uint32_t>(ckpt.tensors.size()));
  for (const auto& [name, t] : ckpt.tensors) {
    put_string16(w, name);
    w.put(static_cast<std::uint8_t>(t.rank()));
    for (std::size_t d : t.shape()) w.put(static_cast<std::uint64_t>(d));
    for (float v : t.data()) w.put_f32(v);
  }
  w.put(static_cast<std::uint32_t>(ckpt.metadata.size()));
  for (const auto& [key, value] : ckpt.metadata) {
    put_string16(w, key);
    w.put(static_cast<std::uint32_t>(value.size()));
    w.put_bytes(value);
  }
  // Write to a temporary and rename so a crash never leaves a torn checkpoint.
  auto tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary);
    if (!out) throw IoError("cannot write " + tmp.string());
    out.write(w.bytes().data(), static_cast<std::streamsize>(w.bytes().size()));
    if (!out) throw IoError("write failed for " + tmp.string());
  }
  std::error_code ec;
  std::filesystem::rename(tmp, path, ec);
  if (ec) throw IoError("cannot move checkpoint into place at " + path.string() + ": " + ec.message());
}

Checkpoint read_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  Reader r(std::vector<char>(std::istreambuf_iterator<char>(in), {}), path.string());

  if (r.get_bytes(4, "magic") != std::string(kMagic, 4)) {
    throw FormatError(path.string() + ": bad magic at offset 0 (not an MGPC checkpoint)");
  }
  const auto version = r.get<std::uint32_t>("version");
  if (version != kCheckpointVersion) r.fail("unsupported version " + std::to_string(version));
  const auto count = r.get<std::uint32_t>("tensor count");

  Checkpoint ckpt;
  for (std::uint32_t i = 0; i < count; ++i) {
    const auto len = r.get<std::uint16_t>("tensor name length");
    std::string name = r.get_bytes(len, "tensor name");
    if (name.empty()) r.fail("empty tensor name");
    const auto rank = r.get<std::uint8_t>("tensor rank");
    if (rank == 0 || rank > kMaxRank) r.fail("tensor '" + name + "' has unsupported rank " + std::to_string(rank));
    Shape shape(rank);
    std::uint64_t numel = 1;
    for (auto& d : shape) {
      const auto v = r.get<std::uint64_t>("tensor dims");
      if (v == 0 || v > (std::uint64_t{1} << 32)) r.fail("tensor '" + name + "' has bad extent " + std::to_string(v));
      d = static_cast<std::size_t>(v);
      numel *= v;
    }
    if (numel * 4 > r.remaining()) r.fail("truncated payload of tensor '" + name + "'");
    std::vector<float> values(numel);
    for (auto& v : values) v = std::bit_cast<float>(r.get<std::uint32_t>("tensor payload"));
    if (!ckpt.tensors.emplace(name, Tensor<float>(shape, std::move(values))).second) {
      r.fail("duplicate tensor '" + name + "'");
    }
  }
  const auto meta = r.get<std::uint32_t>("metadata count");
  for (std::uint32_t i = 0; i < meta; ++i) {
    const auto klen = r.get<std::uint16_t>("metadata key length");
    std::string key = r.get_bytes(klen, "metadata key");
    const auto vlen = r.get<std::uint32_t>("metadata value length");
    std::string value = r.get_bytes(vlen, "metadata value");
    if (!ckpt.metadata.emplace(std::move(key), std::move(value)).second) r.fail("duplicate metadata key");
  }
  if (!r.done()) r.fail("trailing bytes after metadata");
  return ckpt;
}

void save_checkpoint(const std::filesystem::path& path, const MgpModel<float>& model, const TokenizerSet& tokenizers) {
  Checkpoint ckpt;
  for (const auto& [name, p] : model.params()) ckpt.tensors.emplace(name, p.value());
  ckpt.metadata["config"] = model.config().to_json().dump();
  const auto dir = path.parent_path().empty() ? std::filesystem::path(".") : path.parent_path();
  for (const auto& s : kSidecars) {
    if (!model.config().has_head(s.granularity)) continue;
    const auto& codec = tokenizers.at(s.granularity);
    const std::string name = sidecar_name(path, s);
    if (s.merges) codec.merges().save(dir / name);
    else codec.vocab().save(dir / name);
    ckpt.metadata[s.key] = name;
  }
  write_checkpoint(path, ckpt);
}

LoadedModel load_checkpoint(const std::filesystem::path& path) {
  Checkpoint ckpt = read_checkpoint(path);
  auto cfg_it = ckpt.metadata.find("config");
  if (cfg_it == ckpt.metadata.end()) throw FormatError(path.string() + ": checkpoint has no model config");
  ModelConfig cfg;
  try {
    cfg = ModelConfig::from_json(nlohmann::json::parse(cfg_it->second));
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(path.string() + ": bad model config: " + e.what());
  }
  cfg.validate();

  const auto dir = path.parent_path().empty() ? std::filesystem::path(".") : path.parent_path();
  TokenizerSet set;
  set.codecs[0] = tok::Tokenizer::characters();
  auto sidecar = [&](const char* key) {
    auto it = ckpt.metadata.find(key);
    if (it == ckpt.metadata.end()) throw FormatError(path.string() + ": missing " + key);
    return dir / it->second;
  };
  if (cfg.has_head(Granularity::kBpe)) {
    set.codecs[1] = tok::Tokenizer::bpe(
        tok::BpeModel{tok::Vocabulary::load(sidecar("sidecar.bpe.vocab")), tok::MergeTable::load(sidecar("sidecar.bpe.merges"))});
  }
  if (cfg.has_head(Granularity::kWordPiece)) {
    set.codecs[2] = tok::Tokenizer::wordpiece(tok::Vocabulary::load(sidecar("sidecar.wordpiece.vocab")));
  }
  for (auto g : model::kAllGranularities) {
    if (set.has(g) && set.at(g).vocab().size() != cfg.vocab_size(g)) {
      throw FormatError(path.string() + ": " + std::string(tok::to_string(g)) + " vocabulary has " +
                        std::to_string(set.at(g).vocab().size()) + " entries, model expects " +
                        std::to_string(cfg.vocab_size(g)));
    }
  }

  ParamSet<float> params;
  for (auto& [name, t] : ckpt.tensors) params.emplace(name, Var<float>::leaf(std::move(t), true));
  try {
    return LoadedModel{MgpModel<float>(cfg, std::move(params)), std::move(set)};
  } catch (const ConfigError& e) {
    throw FormatError(path.string() + ": " + e.what());
  }
}

}  // namespace mgp::train
