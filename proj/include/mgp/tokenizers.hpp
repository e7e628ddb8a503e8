#pragma once

// Label codecs for the three prediction granularities: characters, BPE
// subwords and WordPiece subwords. Every codec maps a word onto a fixed-length
// id sequence of T slots: tokens, then eos, then pad.

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <utility>
#include <vector>

#include "json.hpp"

namespace mgp::tok {

using TokenId = std::int32_t;

enum class Granularity { kChar = 0, kBpe = 1, kWordPiece = 2 };

std::string_view to_string(Granularity g);
Granularity granularity_from_string(std::string_view name);

// The closed recognition alphabet: digits then lowercase letters.
inline constexpr std::string_view kAlphabet = "0123456789abcdefghijklmnopqrstuvwxyz";
inline constexpr std::string_view kPadToken = "[PAD]";
inline constexpr std::string_view kEosToken = "[EOS]";
inline constexpr std::string_view kUnkToken = "[UNK]";
inline constexpr std::string_view kContinuationPrefix = "##";

bool in_alphabet(char c);
// Throws AlphabetError for empty text or any character outside kAlphabet.
void require_alphabet(std::string_view text);

class Vocabulary {
 public:
  Vocabulary(Granularity granularity, std::vector<std::string> tokens, TokenId pad, TokenId eos,
             std::optional<TokenId> unk);

  // Fixed 38-entry layout: pad=0, eos=1, '0'-'9' = 2..11, 'a'-'z' = 12..37.
  static Vocabulary characters();

  Granularity granularity() const { return granularity_; }
  std::size_t size() const { return tokens_.size(); }
  const std::vector<std::string>& tokens() const { return tokens_; }
  const std::string& token(TokenId id) const { return tokens_.at(static_cast<std::size_t>(id)); }
  std::optional<TokenId> find(std::string_view token) const;
  bool contains(std::string_view token) const { return find(token).has_value(); }

  TokenId pad_id() const { return pad_; }
  TokenId eos_id() const { return eos_; }
  std::optional<TokenId> unk_id() const { return unk_; }
  bool is_special(TokenId id) const { return id == pad_ || id == eos_ || (unk_ && id == *unk_); }

  nlohmann::json to_json() const;
  static Vocabulary from_json(const nlohmann::json& j);
  void save(const std::filesystem::path& path) const;
  static Vocabulary load(const std::filesystem::path& path);

  friend bool operator==(const Vocabulary& a, const Vocabulary& b) {
    return a.granularity_ == b.granularity_ && a.tokens_ == b.tokens_ && a.pad_ == b.pad_ &&
           a.eos_ == b.eos_ && a.unk_ == b.unk_;
  }

 private:
  Granularity granularity_;
  std::vector<std::string> tokens_;
  std::unordered_map<std::string, TokenId> index_;
  TokenId pad_;
  TokenId eos_;
  std::optional<TokenId> unk_;
};

struct MergeRule {
  std::string left;
  std::string right;
  friend bool operator==(const MergeRule&, const MergeRule&) = default;
};

class MergeTable {
 public:
  MergeTable() = default;
  explicit MergeTable(std::vector<MergeRule> rules);

  const std::vector<MergeRule>& rules() const { return rules_; }
  std::size_t size() const { return rules_.size(); }

  nlohmann::json to_json() const;
  static MergeTable from_json(const nlohmann::json& j);
  void save(const std::filesystem::path& path) const;
  static MergeTable load(const std::filesystem::path& path);

  friend bool operator==(const MergeTable&, const MergeTable&) = default;

 private:
  std::vector<MergeRule> rules_;
};

struct TokenSequence {
  std::vector<TokenId> ids;  // exactly T entries
  std::size_t length = 0;    // non-pad ids including eos
};

// Appends eos and pads to T. Throws LengthError when ids.size() > T - 1.
TokenSequence finalize_sequence(std::vector<TokenId> ids, const Vocabulary& vocab, std::size_t T);

TokenSequence char_encode(std::string_view text, std::size_t T);

struct BpeModel {
  Vocabulary vocab;
  MergeTable merges;
};

// Merges the most frequent adjacent pair (frequency-weighted over the corpus)
// until num_merges is reached or no pair occurs at least twice. Ties go to the
// lexicographically smallest (left, right).
BpeModel bpe_train(std::span<const std::string> corpus, std::size_t num_merges);
// Characters of the word with every merge rule applied exhaustively, in table order.
std::vector<std::string> bpe_segment(std::string_view word, const MergeTable& merges);
TokenSequence bpe_encode(std::string_view text, const MergeTable& merges, const Vocabulary& vocab,
                         std::size_t T);

// Desk-scale WordPiece construction; see wordpiece.cpp for the selection rule.
Vocabulary wordpiece_train(std::span<const std::string> corpus, std::size_t vocab_size);
// Greedy longest-match-first pieces; {kUnkToken} when some position has no match.
std::vector<std::string> wordpiece_segment(std::string_view word, const Vocabulary& vocab);
TokenSequence wordpiece_encode(std::string_view text, const Vocabulary& vocab, std::size_t T);

// Ids up to the first eos, concatenated; pad/unk contribute nothing and the
// continuation prefix is stripped.
std::string decode(const Vocabulary& vocab, std::span<const TokenId> ids);

// One granularity's codec, bundling the vocabulary with its merge table (BPE).
class Tokenizer {
 public:
  static Tokenizer characters();
  static Tokenizer bpe(BpeModel model);
  static Tokenizer wordpiece(Vocabulary vocab);

  Granularity granularity() const { return vocab_.granularity(); }
  const Vocabulary& vocab() const { return vocab_; }
  const MergeTable& merges() const { return merges_; }

  TokenSequence encode(std::string_view text, std::size_t T) const;
  std::vector<std::string> segment(std::string_view text) const;
  std::string decode(std::span<const TokenId> ids) const { return tok::decode(vocab_, ids); }

 private:
  Tokenizer(Vocabulary vocab, MergeTable merges) : vocab_(std::move(vocab)), merges_(std::move(merges)) {}

  Vocabulary vocab_;
  MergeTable merges_;
};

}  // namespace mgp::tok
