#include <algorithm>
#include <map>
#include <unordered_map>
#include <unordered_set>

#include "mgp/errors.hpp"
#include "mgp/tokenizers.hpp"

namespace mgp::tok {

namespace {

std::string continuation(std::string_view s) { return std::string(kContinuationPrefix) + std::string(s); }

std::string_view surface(std::string_view unit) {
  if (unit.starts_with(kContinuationPrefix)) unit.remove_prefix(kContinuationPrefix.size());
  return unit;
}

// Longest match first from the left. An empty result means some position had
// no matching unit.
template <typename Contains>
std::vector<std::string> greedy_segment(std::string_view word, const Contains& contains) {
  std::vector<std::string> pieces;
  std::size_t start = 0;
  while (start < word.size()) {
    std::size_t end = word.size();
    std::string piece;
    for (; end > start; --end) {
      std::string cand = start == 0 ? std::string(word.substr(0, end))
                                    : continuation(word.substr(start, end - start));
      if (contains(cand)) {
        piece = std::move(cand);
        break;
      }
    }
    if (end == start) return {};
    pieces.push_back(std::move(piece));
    start = end;
  }
  return pieces;
}

struct Candidate {
  std::string unit;
  std::size_t freq;
};

// Higher frequency first; then by surface string so "aa" and "##aa" tie on
// their text, with the word-initial form first.
bool candidate_before(const Candidate& a, const Candidate& b) {
  if (a.freq != b.freq) return a.freq > b.freq;
  const auto sa = surface(a.unit), sb = surface(b.unit);
  if (sa != sb) return sa < sb;
  return a.unit.size() < b.unit.size();
}

}  // namespace

// Seed: specials, every bare character, every '##' character. Each round counts
// the concatenations of adjacent units under the current greedy segmentation
// (frequency-weighted) and adds the best one that no corpus word gets longer
// under, that lowers the weighted token total, and that greedy matching
// actually selects. Longest match can strand earlier units (adding "coff"
// retires "##ff"); stranded units are dropped, which leaves every corpus
// segmentation unchanged. The strict decrease bounds the number of rounds.
Vocabulary wordpiece_train(std::span<const std::string> corpus, std::size_t vocab_size) {
  if (corpus.empty()) throw CorpusError("WordPiece corpus is empty");
  std::vector<std::string> tokens{std::string(kPadToken), std::string(kEosToken), std::string(kUnkToken)};
  for (char c : kAlphabet) tokens.emplace_back(1, c);
  for (char c : kAlphabet) tokens.push_back(continuation(std::string(1, c)));
  const std::size_t seed_size = tokens.size();
  if (vocab_size < seed_size) {
    throw ConfigError("WordPiece vocab_size " + std::to_string(vocab_size) + " below seed inventory of " +
                      std::to_string(seed_size));
  }

  std::map<std::string, std::size_t> freq;
  for (const auto& w : corpus) {
    require_alphabet(w);
    ++freq[w];
  }
  std::vector<std::pair<std::string, std::size_t>> words(freq.begin(), freq.end());

  std::unordered_set<std::string> units(tokens.begin(), tokens.end());
  std::vector<std::string> learned;
  auto segment_all = [&](const std::unordered_set<std::string>& vocab) {
    auto contains = [&](const std::string& s) { return vocab.count(s) > 0; };
    std::vector<std::vector<std::string>> segs;
    segs.reserve(words.size());
    for (const auto& [w, f] : words) segs.push_back(greedy_segment(w, contains));
    return segs;
  };
  auto segs = segment_all(units);

  while (seed_size + learned.size() < vocab_size) {
    std::unordered_map<std::string, std::size_t> counts;
    for (std::size_t i = 0; i < words.size(); ++i) {
      const auto& seg = segs[i];
      for (std::size_t j = 0; j + 1 < seg.size(); ++j) {
        std::string unit = seg[j] + std::string(surface(seg[j + 1]));
        if (!units.count(unit)) counts[unit] += words[i].second;
      }
    }
    std::vector<Candidate> cands;
    cands.reserve(counts.size());
    for (auto& [unit, f] : counts) cands.push_back({unit, f});
    std::sort(cands.begin(), cands.end(), candidate_before);

    bool added = false;
    for (const auto& cand : cands) {
      units.insert(cand.unit);
      auto trial = segment_all(units);
      bool ok = true;
      std::size_t before = 0, after = 0;
      std::unordered_set<std::string> used;
      for (std::size_t i = 0; i < words.size() && ok; ++i) {
        if (trial[i].size() > segs[i].size()) ok = false;
        before += segs[i].size() * words[i].second;
        after += trial[i].size() * words[i].second;
        used.insert(trial[i].begin(), trial[i].end());
      }
      if (ok && after < before && used.count(cand.unit)) {
        learned.push_back(cand.unit);
        std::erase_if(learned, [&](const std::string& u) {
          if (used.count(u)) return false;
          units.erase(u);
          return true;
        });
        segs = std::move(trial);
        added = true;
        break;
      }
      units.erase(cand.unit);
    }
    if (!added) break;
  }
  tokens.insert(tokens.end(), learned.begin(), learned.end());
  return Vocabulary(Granularity::kWordPiece, std::move(tokens), 0, 1, 2);
}

std::vector<std::string> wordpiece_segment(std::string_view word, const Vocabulary& vocab) {
  require_alphabet(word);
  auto pieces = greedy_segment(word, [&](const std::string& s) { return vocab.contains(s); });
  if (pieces.empty()) return {std::string(kUnkToken)};
  return pieces;
}

TokenSequence wordpiece_encode(std::string_view text, const Vocabulary& vocab, std::size_t T) {
  const auto pieces = wordpiece_segment(text, vocab);
  std::vector<TokenId> ids;
  ids.reserve(pieces.size());
  if (pieces.size() == 1 && pieces[0] == kUnkToken) {
    ids.push_back(*vocab.unk_id());
  } else {
    for (const auto& p : pieces) ids.push_back(*vocab.find(p));
  }
  return finalize_sequence(std::move(ids), vocab, T);
}

}  // namespace mgp::tok
