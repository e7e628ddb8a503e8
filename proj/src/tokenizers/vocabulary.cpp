#include <fstream>
#include <sstream>
#include <unordered_set>

#include "mgp/errors.hpp"
#include "mgp/tokenizers.hpp"

namespace mgp::tok {

namespace {

constexpr std::size_t kCharVocabSize = 38;

nlohmann::json read_json_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path.string());
  try {
    return nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(path.string() + ": " + e.what());
  }
}

void write_json_file(const std::filesystem::path& path, const nlohmann::json& j) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path.string());
  out << j.dump(2) << '\n';
  if (!out) throw IoError("write failed: " + path.string());
}

}  // namespace

std::string_view to_string(Granularity g) {
  switch (g) {
    case Granularity::kChar: return "char";
    case Granularity::kBpe: return "bpe";
    case Granularity::kWordPiece: return "wordpiece";
  }
  return "?";
}

Granularity granularity_from_string(std::string_view name) {
  if (name == "char") return Granularity::kChar;
  if (name == "bpe") return Granularity::kBpe;
  if (name == "wordpiece" || name == "wp") return Granularity::kWordPiece;
  throw ConfigError("unknown granularity '" + std::string(name) + "'");
}

bool in_alphabet(char c) { return (c >= '0' && c <= '9') || (c >= 'a' && c <= 'z'); }

void require_alphabet(std::string_view text) {
  if (text.empty()) throw AlphabetError("empty text");
  for (char c : text) {
    if (!in_alphabet(c)) {
      throw AlphabetError("character '" + std::string(1, c) + "' outside [0-9a-z] in '" +
                          std::string(text) + "'");
    }
  }
}

Vocabulary::Vocabulary(Granularity granularity, std::vector<std::string> tokens, TokenId pad,
                       TokenId eos, std::optional<TokenId> unk)
    : granularity_(granularity), tokens_(std::move(tokens)), pad_(pad), eos_(eos), unk_(unk) {
  const auto n = static_cast<TokenId>(tokens_.size());
  auto valid = [n](TokenId id) { return id >= 0 && id < n; };
  if (!valid(pad_) || !valid(eos_) || pad_ == eos_) throw ConfigError("invalid pad/eos ids");
  if (granularity_ == Granularity::kChar) {
    if (unk_) throw ConfigError("character vocabulary has no unk");
    if (tokens_.size() != kCharVocabSize) throw ConfigError("character vocabulary must have 38 entries");
  } else if (!unk_ || !valid(*unk_) || *unk_ == pad_ || *unk_ == eos_) {
    throw ConfigError("subword vocabulary needs a distinct unk id");
  }
  index_.reserve(tokens_.size());
  for (std::size_t i = 0; i < tokens_.size(); ++i) {
    if (tokens_[i].empty()) throw ConfigError("empty token at id " + std::to_string(i));
    if (!index_.emplace(tokens_[i], static_cast<TokenId>(i)).second) {
      throw ConfigError("duplicate token '" + tokens_[i] + "'");
    }
  }
}

Vocabulary Vocabulary::characters() {
  std::vector<std::string> tokens{std::string(kPadToken), std::string(kEosToken)};
  for (char c : kAlphabet) tokens.emplace_back(1, c);
  return Vocabulary(Granularity::kChar, std::move(tokens), 0, 1, std::nullopt);
}

std::optional<TokenId> Vocabulary::find(std::string_view token) const {
  auto it = index_.find(std::string(token));
  if (it == index_.end()) return std::nullopt;
  return it->second;
}

nlohmann::json Vocabulary::to_json() const {
  nlohmann::json special{{"pad", pad_}, {"eos", eos_}};
  if (unk_) special["unk"] = *unk_;
  return {{"granularity", to_string(granularity_)}, {"tokens", tokens_}, {"special", special}};
}

Vocabulary Vocabulary::from_json(const nlohmann::json& j) {
  try {
    const auto& special = j.at("special");
    std::optional<TokenId> unk;
    if (special.contains("unk")) unk = special.at("unk").get<TokenId>();
    return Vocabulary(granularity_from_string(j.at("granularity").get<std::string>()),
                      j.at("tokens").get<std::vector<std::string>>(), special.at("pad").get<TokenId>(),
                      special.at("eos").get<TokenId>(), unk);
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("vocabulary json: ") + e.what());
  } catch (const ConfigError& e) {
    throw FormatError(std::string("vocabulary json: ") + e.what());
  }
}

void Vocabulary::save(const std::filesystem::path& path) const { write_json_file(path, to_json()); }

Vocabulary Vocabulary::load(const std::filesystem::path& path) { return from_json(read_json_file(path)); }

MergeTable::MergeTable(std::vector<MergeRule> rules) : rules_(std::move(rules)) {
  std::unordered_set<std::string> seen;
  for (const auto& r : rules_) {
    if (r.left.empty() || r.right.empty()) throw ConfigError("empty merge operand");
    if (!seen.insert(r.left + '\x1f' + r.right).second) {
      throw ConfigError("duplicate merge (" + r.left + ", " + r.right + ")");
    }
  }
}

nlohmann::json MergeTable::to_json() const {
  auto arr = nlohmann::json::array();
  for (const auto& r : rules_) arr.push_back({r.left, r.right});
  return {{"merges", arr}};
}

MergeTable MergeTable::from_json(const nlohmann::json& j) {
  try {
    std::vector<MergeRule> rules;
    for (const auto& pair : j.at("merges")) {
      if (!pair.is_array() || pair.size() != 2) throw FormatError("merge entry must be a pair");
      rules.push_back({pair[0].get<std::string>(), pair[1].get<std::string>()});
    }
    return MergeTable(std::move(rules));
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("merges json: ") + e.what());
  } catch (const ConfigError& e) {
    throw FormatError(std::string("merges json: ") + e.what());
  }
}

void MergeTable::save(const std::filesystem::path& path) const { write_json_file(path, to_json()); }

MergeTable MergeTable::load(const std::filesystem::path& path) { return from_json(read_json_file(path)); }

TokenSequence finalize_sequence(std::vector<TokenId> ids, const Vocabulary& vocab, std::size_t T) {
  if (T == 0 || ids.size() > T - 1) {
    throw LengthError(std::to_string(ids.size()) + " tokens do not fit in T=" + std::to_string(T) +
                      " slots with eos");
  }
  TokenSequence seq;
  seq.length = ids.size() + 1;
  seq.ids = std::move(ids);
  seq.ids.push_back(vocab.eos_id());
  seq.ids.resize(T, vocab.pad_id());
  return seq;
}

TokenSequence char_encode(std::string_view text, std::size_t T) {
  require_alphabet(text);
  std::vector<TokenId> ids;
  ids.reserve(text.size());
  for (char c : text) ids.push_back(c <= '9' ? 2 + (c - '0') : 12 + (c - 'a'));
  return finalize_sequence(std::move(ids), Vocabulary::characters(), T);
}

std::string decode(const Vocabulary& vocab, std::span<const TokenId> ids) {
  std::string out;
  for (TokenId id : ids) {
    if (id < 0 || static_cast<std::size_t>(id) >= vocab.size()) {
      throw LabelError("token id " + std::to_string(id) + " outside vocabulary of " +
                       std::to_string(vocab.size()));
    }
    if (id == vocab.eos_id()) break;
    if (vocab.is_special(id)) continue;
    std::string_view t = vocab.token(id);
    if (vocab.granularity() == Granularity::kWordPiece && t.starts_with(kContinuationPrefix)) {
      t.remove_prefix(kContinuationPrefix.size());
    }
    out += t;
  }
  return out;
}

Tokenizer Tokenizer::characters() { return Tokenizer(Vocabulary::characters(), MergeTable{}); }

Tokenizer Tokenizer::bpe(BpeModel model) {
  if (model.vocab.granularity() != Granularity::kBpe) throw ConfigError("not a BPE vocabulary");
  return Tokenizer(std::move(model.vocab), std::move(model.merges));
}

Tokenizer Tokenizer::wordpiece(Vocabulary vocab) {
  if (vocab.granularity() != Granularity::kWordPiece) throw ConfigError("not a WordPiece vocabulary");
  return Tokenizer(std::move(vocab), MergeTable{});
}

TokenSequence Tokenizer::encode(std::string_view text, std::size_t T) const {
  switch (granularity()) {
    case Granularity::kChar: return char_encode(text, T);
    case Granularity::kBpe: return bpe_encode(text, merges_, vocab_, T);
    case Granularity::kWordPiece: return wordpiece_encode(text, vocab_, T);
  }
  throw ConfigError("bad granularity");
}

std::vector<std::string> Tokenizer::segment(std::string_view text) const {
  switch (granularity()) {
    case Granularity::kChar: {
      require_alphabet(text);
      std::vector<std::string> out;
      for (char c : text) out.emplace_back(1, c);
      return out;
    }
    case Granularity::kBpe: return bpe_segment(text, merges_);
    case Granularity::kWordPiece: return wordpiece_segment(text, vocab_);
  }
  throw ConfigError("bad granularity");
}

}  // namespace mgp::tok
