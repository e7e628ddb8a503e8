#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <set>

#include "mgp/errors.hpp"
#include "mgp/synthdata.hpp"
#include "mgp/tokenizers.hpp"

namespace mgp::data {

Lexicon Lexicon::uniform(std::vector<std::string> words) {
  Lexicon lex;
  lex.weights.assign(words.size(), 1.0);
  lex.words = std::move(words);
  return lex;
}

Lexicon Lexicon::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open lexicon " + path.string());
  Lexicon lex;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    double w = 1.0;
    const auto tab = line.find('\t');
    if (tab != std::string::npos) {
      const std::string ws = line.substr(tab + 1);
      auto [p, ec] = std::from_chars(ws.data(), ws.data() + ws.size(), w);
      if (ec != std::errc() || p != ws.data() + ws.size()) {
        throw FormatError(path.string() + ":" + std::to_string(lineno) + ": bad weight '" + ws + "'");
      }
      line.resize(tab);
    }
    lex.words.push_back(line);
    lex.weights.push_back(w);
  }
  lex.validate();
  return lex;
}

void Lexicon::save(const std::filesystem::path& path) const {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write lexicon " + path.string());
  out.precision(17);
  for (std::size_t i = 0; i < words.size(); ++i) out << words[i] << '\t' << weights[i] << '\n';
  if (!out) throw IoError("write failed for " + path.string());
}

void Lexicon::validate() const {
  if (words.empty()) throw ConfigError("lexicon is empty");
  if (weights.size() != words.size()) throw ConfigError("lexicon weights do not match words");
  std::set<std::string> seen;
  for (std::size_t i = 0; i < words.size(); ++i) {
    tok::require_alphabet(words[i]);
    if (words[i].size() > kMaxRenderLength) {
      throw LengthError("lexicon word '" + words[i] + "' is longer than " + std::to_string(kMaxRenderLength));
    }
    if (!seen.insert(words[i]).second) throw ConfigError("duplicate lexicon word '" + words[i] + "'");
    if (!(weights[i] > 0.0) || !std::isfinite(weights[i])) {
      throw ConfigError("lexicon weight for '" + words[i] + "' must be positive");
    }
  }
}

Lexicon default_lexicon() {
  std::vector<std::string> words{
    "table", "coffee", "guide", "today", "water", "advisory", "house", "street", "garden", "market",
    "window", "river", "bridge", "station", "city", "night", "light", "money", "paper", "music",
    "story", "power", "change", "place", "point", "world", "school", "family", "group", "country",
    "problem", "hand", "part", "eye", "week", "company", "system", "program", "question", "work",
    "government", "number", "home", "area", "room", "mother", "office", "door", "health", "person",
    "art", "war", "history", "party", "result", "morning", "reason", "research", "girl", "moment",
    "air", "teacher", "force", "education", "foot", "boy", "age", "policy", "process", "level",
    "love", "road", "car", "friend", "end", "minute", "student", "class", "game", "field", "lake",
    "open", "stop", "park", "hotel", "bank", "coast", "forest", "island", "valley", "mountain",
    "north", "south", "east", "west", "summer", "winter", "spring", "autumn", "green", "blue",
    "black", "white", "yellow", "orange", "purple", "silver", "golden", "red", "brown", "apple",
    "bread", "cheese", "butter", "sugar", "salt", "pepper", "honey", "lemon", "milk", "tea",
    "juice", "dinner", "lunch", "supper", "horse", "tiger", "eagle", "rabbit", "mouse", "snake",
    "whale", "shark", "zebra", "lion", "panda", "monkey", "pilot", "doctor", "nurse", "farmer",
    "artist", "writer", "singer", "dancer", "baker", "driver", "plaza", "avenue", "lane", "drive",
    "court", "square", "castle", "tower", "temple", "palace", "museum", "library", "theater",
    "cinema", "exit", "entry", "sale", "closed", "push", "pull", "hello", "thanks", "welcome",
    "sorry", "quick", "jump", "lazy", "fox", "dog", "cat", "bird", "fish", "tree", "leaf", "rock",
    "sand", "wave", "star", "moon", "sun", "sky", "cloud", "rain", "snow", "wind", "storm",
    "kitchen", "bedroom", "garage", "cellar", "attic", "ticket", "wallet",
    // digit strings
    "1869", "2024", "911", "42", "100", "365", "1024", "747", "2001", "31",
    "555", "808", "1200", "64", "7000", "12", "4096", "250", "99", "1776",
  };
  return Lexicon::uniform(std::move(words));
}

}  // namespace mgp::data
