#pragma once

#include <algorithm>
#include <cctype>
#include <cstddef>
#include <filesystem>
#include <fstream>
#include <map>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "conflict/errors.hpp"

namespace conflict {

using TokenId = std::size_t;

/// Lowercases ASCII, splits on whitespace, and emits every ASCII punctuation
/// character as a token of its own. Bytes >= 0x80 are treated as word characters.
inline std::vector<std::string> tokenize(std::string_view text) {
  std::vector<std::string> tokens;
  std::string current;
  auto flush = [&] {
    if (!current.empty()) tokens.push_back(std::move(current));
    current.clear();
  };
  for (char raw : text) {
    const auto c = static_cast<unsigned char>(raw);
    if (std::isspace(c)) {
      flush();
    } else if (c < 0x80 && std::ispunct(c)) {
      flush();
      tokens.emplace_back(1, static_cast<char>(c));
    } else {
      current.push_back(static_cast<char>(std::tolower(c)));
    }
  }
  flush();
  return tokens;
}

/// Normalised text: tokens re-joined with single spaces.
inline std::string normalize_text(std::string_view text) {
  std::string out;
  for (const auto& t : tokenize(text)) {
    if (!out.empty()) out.push_back(' ');
    out += t;
  }
  return out;
}

class Vocabulary {
 public:
  static constexpr TokenId kPad = 0;
  static constexpr TokenId kUnk = 1;
  static constexpr std::string_view kPadToken = "<pad>";
  static constexpr std::string_view kUnkToken = "<unk>";

  Vocabulary() : tokens_{std::string(kPadToken), std::string(kUnkToken)} { reindex(); }

  /// Keeps tokens seen at least `min_frequency` times, ordered by descending
  /// count then lexicographically so the id assignment is deterministic.
  static Vocabulary build(const std::vector<std::vector<std::string>>& documents,
                          std::size_t min_frequency = 2) {
    std::map<std::string, std::size_t> counts;
    for (const auto& doc : documents)
      for (const auto& tok : doc) ++counts[tok];
    std::vector<std::pair<std::string, std::size_t>> kept;
    for (auto& [tok, n] : counts) {
      if (n >= min_frequency && tok != kPadToken && tok != kUnkToken) kept.emplace_back(tok, n);
    }
    std::stable_sort(kept.begin(), kept.end(),
                     [](const auto& a, const auto& b) { return a.second > b.second; });
    Vocabulary v;
    for (auto& [tok, n] : kept) v.tokens_.push_back(tok);
    v.reindex();
    return v;
  }

  std::size_t size() const { return tokens_.size(); }

  TokenId id(std::string_view token) const {
    auto it = index_.find(std::string(token));
    return it == index_.end() ? kUnk : it->second;
  }

  const std::string& token(TokenId id) const {
    if (id >= tokens_.size()) throw DataError("token id " + std::to_string(id) + " out of range");
    return tokens_[id];
  }

  /// Token ids for `text`, truncated to `max_length` tokens (0 = no limit).
  std::vector<TokenId> encode(std::string_view text, std::size_t max_length = 0) const {
    auto toks = tokenize(text);
    if (max_length != 0 && toks.size() > max_length) toks.resize(max_length);
    std::vector<TokenId> ids;
    ids.reserve(toks.size());
    for (const auto& t : toks) ids.push_back(id(t));
    return ids;
  }

  /// One token per line; the line number is the id.
  void save(const std::filesystem::path& path) const {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot write vocabulary file " + path.string());
    for (const auto& t : tokens_) out << t << '\n';
    if (!out) throw IoError("failed writing vocabulary file " + path.string());
  }

  static Vocabulary load(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot read vocabulary file " + path.string());
    Vocabulary v;
    v.tokens_.clear();
    std::string line;
    while (std::getline(in, line)) v.tokens_.push_back(line);
    if (v.tokens_.size() < 2 || v.tokens_[kPad] != kPadToken || v.tokens_[kUnk] != kUnkToken) {
      throw FormatError("vocabulary file " + path.string() + " lacks the <pad>/<unk> prefix");
    }
    v.reindex();
    return v;
  }

  const std::vector<std::string>& tokens() const { return tokens_; }

 private:
  void reindex() {
    index_.clear();
    for (TokenId i = 0; i < tokens_.size(); ++i) index_.emplace(tokens_[i], i);
  }

  std::vector<std::string> tokens_;
  std::unordered_map<std::string, TokenId> index_;
};

}  // namespace conflict
