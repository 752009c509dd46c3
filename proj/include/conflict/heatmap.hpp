#pragma once

// Weight matrices as CSV: the header row lists the tokens of v (top-left cell
// empty), each following row starts with a token of u, cells carry six decimals.

#include <cstddef>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "conflict/errors.hpp"
#include "conflict/interaction.hpp"
#include "conflict/tensor.hpp"

namespace conflict {

struct HeatmapTable {
  std::vector<std::string> row_tokens;  // u
  std::vector<std::string> col_tokens;  // v
  std::vector<double> values;           // row-major

  double at(std::size_t i, std::size_t j) const { return values[i * col_tokens.size() + j]; }
};

namespace detail {

inline std::string csv_field(const std::string& s) {
  if (s.find_first_of(",\"\n\r") == std::string::npos) return s;
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += "\"\"";
    else out.push_back(c);
  }
  out.push_back('"');
  return out;
}

inline std::vector<std::string> parse_csv_line(const std::string& line) {
  std::vector<std::string> fields;
  std::string cur;
  bool quoted = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    const char c = line[i];
    if (quoted) {
      if (c == '"' && i + 1 < line.size() && line[i + 1] == '"') {
        cur.push_back('"');
        ++i;
      } else if (c == '"') {
        quoted = false;
      } else {
        cur.push_back(c);
      }
    } else if (c == '"') {
      quoted = true;
    } else if (c == ',') {
      fields.push_back(std::move(cur));
      cur.clear();
    } else {
      cur.push_back(c);
    }
  }
  if (quoted) throw FormatError("unterminated quote in CSV line");
  fields.push_back(std::move(cur));
  return fields;
}

}  // namespace detail

inline std::string heatmap_csv(const Tensor& weights, const std::vector<std::string>& tokens_u,
                               const std::vector<std::string>& tokens_v) {
  if (weights.rank() != 2 || weights.shape()[0] != tokens_u.size() || weights.shape()[1] != tokens_v.size()) {
    throw UsageError("heatmap: matrix " + shape_str(weights.shape()) + " does not match " +
                     std::to_string(tokens_u.size()) + " row and " + std::to_string(tokens_v.size()) +
                     " column tokens");
  }
  std::ostringstream os;
  for (const auto& t : tokens_v) os << ',' << detail::csv_field(t);
  os << '\n';
  char cell[32];
  for (std::size_t i = 0; i < tokens_u.size(); ++i) {
    os << detail::csv_field(tokens_u[i]);
    for (std::size_t j = 0; j < tokens_v.size(); ++j) {
      std::snprintf(cell, sizeof cell, "%.6f", weights(i, j));
      os << ',' << cell;
    }
    os << '\n';
  }
  return os.str();
}

inline void export_heatmap(const Tensor& weights, const std::vector<std::string>& tokens_u,
                           const std::vector<std::string>& tokens_v, const std::filesystem::path& path) {
  const std::string text = heatmap_csv(weights, tokens_u, tokens_v);
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write heatmap " + path.string());
  out << text;
}

inline void export_heatmap(const WeightMatrix& weights, const std::vector<std::string>& tokens_u,
                           const std::vector<std::string>& tokens_v, const std::filesystem::path& path) {
  export_heatmap(weights.values, tokens_u, tokens_v, path);
}

inline HeatmapTable read_heatmap_csv(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot read heatmap " + path.string());
  std::string line;
  if (!std::getline(in, line)) throw FormatError("empty heatmap " + path.string());
  auto header = detail::parse_csv_line(line);
  HeatmapTable table;
  table.col_tokens.assign(header.begin() + 1, header.end());
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    auto fields = detail::parse_csv_line(line);
    if (fields.size() != header.size()) throw FormatError("ragged heatmap row in " + path.string());
    table.row_tokens.push_back(fields[0]);
    for (std::size_t j = 1; j < fields.size(); ++j) table.values.push_back(std::stod(fields[j]));
  }
  return table;
}

}  // namespace conflict
