#pragma once

// Quora-format TSV ingestion, class balancing with an 8:2 split, and
// conversion of text pairs into token-id pairs.

#include <algorithm>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <random>
#include <sstream>
#include <string>
#include <tuple>
#include <vector>

#include "conflict/errors.hpp"
#include "conflict/training.hpp"
#include "conflict/vocabulary.hpp"

namespace conflict {

struct SequencePairRecord {
  std::string text1;
  std::string text2;
  std::size_t label = 0;

  friend bool operator==(const SequencePairRecord&, const SequencePairRecord&) = default;
  friend auto operator<=>(const SequencePairRecord& a, const SequencePairRecord& b) {
    return std::tie(a.label, a.text1, a.text2) <=> std::tie(b.label, b.text1, b.text2);
  }
};

struct LoadResult {
  std::vector<SequencePairRecord> records;
  std::size_t skipped = 0;
};

namespace detail {

inline std::vector<std::string> split_tabs(const std::string& line) {
  std::vector<std::string> fields;
  std::size_t start = 0;
  while (true) {
    auto tab = line.find('\t', start);
    fields.push_back(line.substr(start, tab == std::string::npos ? std::string::npos : tab - start));
    if (tab == std::string::npos) break;
    start = tab + 1;
  }
  return fields;
}

/// Strips CSV-style quotes. Returns false for a field that opens a quote it never closes.
inline bool unquote(std::string& field) {
  if (field.empty() || field.front() != '"') return true;
  if (field.size() < 2 || field.back() != '"') return false;
  std::string out;
  for (std::size_t i = 1; i + 1 < field.size(); ++i) {
    if (field[i] == '"') {
      if (i + 2 < field.size() && field[i + 1] == '"') {
        out.push_back('"');
        ++i;
      } else {
        return false;
      }
    } else {
      out.push_back(field[i]);
    }
  }
  field = std::move(out);
  return true;
}

}  // namespace detail

/// Reads a tab-separated file whose header names at least `question1`,
/// `question2` and `is_duplicate`. Malformed rows are skipped and counted.
inline LoadResult load_quora_tsv(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open data file " + path.string());
  std::string line;
  if (!std::getline(in, line)) throw FormatError(path.string() + " is empty");
  if (!line.empty() && line.back() == '\r') line.pop_back();
  const auto header = detail::split_tabs(line);
  auto column = [&](const std::string& name) {
    auto it = std::find(header.begin(), header.end(), name);
    if (it == header.end()) throw FormatError(path.string() + ": missing column '" + name + "'");
    return static_cast<std::size_t>(it - header.begin());
  };
  const std::size_t c1 = column("question1"), c2 = column("question2"), cl = column("is_duplicate");

  LoadResult result;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    auto fields = detail::split_tabs(line);
    if (fields.size() != header.size()) {
      ++result.skipped;
      continue;
    }
    SequencePairRecord r;
    r.text1 = fields[c1];
    r.text2 = fields[c2];
    std::string label = fields[cl];
    if (!detail::unquote(r.text1) || !detail::unquote(r.text2) || !detail::unquote(label) ||
        (label != "0" && label != "1") || tokenize(r.text1).empty() || tokenize(r.text2).empty()) {
      ++result.skipped;
      continue;
    }
    r.label = label == "1" ? 1 : 0;
    result.records.push_back(std::move(r));
  }
  return result;
}

inline void write_quora_tsv(const std::filesystem::path& path, const std::vector<SequencePairRecord>& records) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write data file " + path.string());
  out << "question1\tquestion2\tis_duplicate\n";
  for (const auto& r : records) {
    if (r.text1.find_first_of("\t\n") != std::string::npos || r.text2.find_first_of("\t\n") != std::string::npos) {
      throw DataError("record text contains a tab or newline");
    }
    out << r.text1 << '\t' << r.text2 << '\t' << r.label << '\n';
  }
  if (!out) throw IoError("failed writing data file " + path.string());
}

struct DatasetSplit {
  std::vector<SequencePairRecord> train;
  std::vector<SequencePairRecord> test;
  std::uint64_t seed = 0;
};

/// Downsamples the majority class to the minority count, then splits each
/// class 8:2 and shuffles. Input order does not affect the result.
inline DatasetSplit balance_and_split(std::vector<SequencePairRecord> records, std::uint64_t seed) {
  std::sort(records.begin(), records.end());
  std::vector<SequencePairRecord> pos, neg;
  for (auto& r : records) (r.label == 1 ? pos : neg).push_back(std::move(r));
  if (pos.empty() || neg.empty()) throw DataError("balance_and_split: both classes must be present");

  std::mt19937_64 rng(seed);
  std::shuffle(pos.begin(), pos.end(), rng);
  std::shuffle(neg.begin(), neg.end(), rng);
  const std::size_t per_class = std::min(pos.size(), neg.size());
  pos.resize(per_class);
  neg.resize(per_class);

  const auto train_per_class = static_cast<std::size_t>(std::llround(0.8 * static_cast<double>(per_class)));
  DatasetSplit split;
  split.seed = seed;
  for (auto* cls : {&pos, &neg}) {
    split.train.insert(split.train.end(), cls->begin(), cls->begin() + static_cast<std::ptrdiff_t>(train_per_class));
    split.test.insert(split.test.end(), cls->begin() + static_cast<std::ptrdiff_t>(train_per_class), cls->end());
  }
  std::shuffle(split.train.begin(), split.train.end(), rng);
  std::shuffle(split.test.begin(), split.test.end(), rng);
  return split;
}

/// Token texts of every record, for vocabulary construction.
inline std::vector<std::vector<std::string>> tokenized_texts(const std::vector<SequencePairRecord>& records) {
  std::vector<std::vector<std::string>> docs;
  docs.reserve(2 * records.size());
  for (const auto& r : records) {
    docs.push_back(tokenize(r.text1));
    docs.push_back(tokenize(r.text2));
  }
  return docs;
}

inline std::vector<EncodedPair> encode_records(const std::vector<SequencePairRecord>& records,
                                               const Vocabulary& vocab, std::size_t max_length = 40) {
  std::vector<EncodedPair> out;
  out.reserve(records.size());
  for (const auto& r : records) {
    EncodedPair p{vocab.encode(r.text1, max_length), vocab.encode(r.text2, max_length), r.label};
    if (p.q1.empty() || p.q2.empty()) throw DataError("record with empty text after normalisation");
    out.push_back(std::move(p));
  }
  return out;
}

}  // namespace conflict
