#include <algorithm>
#include <map>

#include "mgp/errors.hpp"
#include "mgp/tokenizers.hpp"

namespace mgp::tok {

namespace {

using Segmentation = std::vector<std::string>;

// Single left-to-right pass. A merged token can never pair up under the same
// rule again, so one pass applies the rule exhaustively.
void apply_rule(Segmentation& seg, const MergeRule& rule) {
  if (seg.size() < 2) return;
  Segmentation out;
  out.reserve(seg.size());
  for (std::size_t i = 0; i < seg.size(); ++i) {
    if (i + 1 < seg.size() && seg[i] == rule.left && seg[i + 1] == rule.right) {
      out.push_back(seg[i] + seg[i + 1]);
      ++i;
    } else {
      out.push_back(std::move(seg[i]));
    }
  }
  seg = std::move(out);
}

Segmentation split_chars(std::string_view word) {
  Segmentation seg;
  seg.reserve(word.size());
  for (char c : word) seg.emplace_back(1, c);
  return seg;
}

std::vector<std::string> seed_tokens() {
  std::vector<std::string> tokens{std::string(kPadToken), std::string(kEosToken), std::string(kUnkToken)};
  for (char c : kAlphabet) tokens.emplace_back(1, c);
  return tokens;
}

}  // namespace

BpeModel bpe_train(std::span<const std::string> corpus, std::size_t num_merges) {
  if (corpus.empty()) throw CorpusError("BPE corpus is empty");
  std::map<std::string, std::size_t> freq;
  for (const auto& w : corpus) {
    require_alphabet(w);
    ++freq[w];
  }
  std::vector<std::pair<Segmentation, std::size_t>> words;
  words.reserve(freq.size());
  for (const auto& [w, f] : freq) words.emplace_back(split_chars(w), f);

  std::vector<std::string> tokens = seed_tokens();
  std::vector<MergeRule> rules;
  while (rules.size() < num_merges) {
    std::map<std::pair<std::string, std::string>, std::size_t> counts;
    for (const auto& [seg, f] : words) {
      for (std::size_t i = 0; i + 1 < seg.size(); ++i) counts[{seg[i], seg[i + 1]}] += f;
    }
    // std::map iterates pairs in lexicographic order, so a strict comparison
    // keeps the smallest pair among equal counts.
    const std::pair<std::string, std::string>* best = nullptr;
    std::size_t best_count = 0;
    for (const auto& [pair, c] : counts) {
      if (c > best_count) {
        best = &pair;
        best_count = c;
      }
    }
    if (!best || best_count < 2) break;
    MergeRule rule{best->first, best->second};
    for (auto& [seg, f] : words) apply_rule(seg, rule);
    std::string merged = rule.left + rule.right;
    if (std::find(tokens.begin(), tokens.end(), merged) == tokens.end()) tokens.push_back(std::move(merged));
    rules.push_back(std::move(rule));
  }
  return {Vocabulary(Granularity::kBpe, std::move(tokens), 0, 1, 2), MergeTable(std::move(rules))};
}

std::vector<std::string> bpe_segment(std::string_view word, const MergeTable& merges) {
  require_alphabet(word);
  Segmentation seg = split_chars(word);
  for (const auto& rule : merges.rules()) {
    if (seg.size() < 2) break;
    apply_rule(seg, rule);
  }
  return seg;
}

TokenSequence bpe_encode(std::string_view text, const MergeTable& merges, const Vocabulary& vocab,
                         std::size_t T) {
  const auto pieces = bpe_segment(text, merges);
  std::vector<TokenId> ids;
  ids.reserve(pieces.size());
  for (const auto& p : pieces) {
    auto id = vocab.find(p);
    ids.push_back(id ? *id : vocab.unk_id().value_or(vocab.pad_id()));
  }
  return finalize_sequence(std::move(ids), vocab, T);
}

}  // namespace mgp::tok
