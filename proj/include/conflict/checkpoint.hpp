#pragma once

// Checkpoint layout:
//
//   CONFLICT-CHECKPOINT 1\n
//   key=value\n            (plain-text config header, one entry per line)
//   ...
//   \n                     (blank line ends the header)
//   u64 parameter count
//   per parameter: u32 name length, name bytes, u32 rank, u64 extents[rank],
//                  f64 values (row-major)
//
// Every integer and float is stored little-endian.

#include <bit>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>
#include <string>

#include "conflict/model.hpp"

namespace conflict {

using HeaderFields = std::map<std::string, std::string>;

inline constexpr std::string_view kCheckpointMagic = "CONFLICT-CHECKPOINT 1";

namespace detail {

template <typename T>
void write_le(std::ostream& out, T value) {
  using U = std::conditional_t<sizeof(T) == 8, std::uint64_t, std::uint32_t>;
  auto bits = std::bit_cast<U>(value);
  char bytes[sizeof(U)];
  for (std::size_t i = 0; i < sizeof(U); ++i) bytes[i] = static_cast<char>((bits >> (8 * i)) & 0xFF);
  out.write(bytes, sizeof(U));
}

template <typename T>
T read_le(std::istream& in) {
  using U = std::conditional_t<sizeof(T) == 8, std::uint64_t, std::uint32_t>;
  unsigned char bytes[sizeof(U)];
  if (!in.read(reinterpret_cast<char*>(bytes), sizeof(U))) {
    throw FormatError("checkpoint truncated");
  }
  U bits = 0;
  for (std::size_t i = 0; i < sizeof(U); ++i) bits |= static_cast<U>(bytes[i]) << (8 * i);
  return std::bit_cast<T>(bits);
}

inline std::string format_double(double x) {
  std::ostringstream os;
  os.precision(17);
  os << x;
  return os.str();
}

}  // namespace detail

inline HeaderFields config_to_header(const ModelConfig& c) {
  return {{"vocab_size", std::to_string(c.vocab_size)},
          {"embed_dim", std::to_string(c.embed_dim)},
          {"hidden_dim", std::to_string(c.hidden_dim)},
          {"mode", std::string(to_string(c.mode))},
          {"fc_layers", std::to_string(c.fc_layers)},
          {"dropout", detail::format_double(c.dropout)},
          {"bidirectional_pair", c.bidirectional_pair ? "1" : "0"}};
}

inline ModelConfig config_from_header(const HeaderFields& h) {
  auto get = [&h](const std::string& key) {
    auto it = h.find(key);
    if (it == h.end()) throw FormatError("checkpoint header lacks '" + key + "'");
    return it->second;
  };
  ModelConfig c;
  try {
    c.vocab_size = std::stoull(get("vocab_size"));
    c.embed_dim = std::stoull(get("embed_dim"));
    c.hidden_dim = std::stoull(get("hidden_dim"));
    c.mode = parse_interaction_mode(get("mode"));
    c.fc_layers = std::stoull(get("fc_layers"));
    c.dropout = std::stod(get("dropout"));
    c.bidirectional_pair = get("bidirectional_pair") == "1";
  } catch (const std::logic_error&) {
    throw FormatError("malformed numeric field in checkpoint header");
  }
  return c;
}

/// Writes the model; `extra` entries are appended to the header (model keys win).
inline void save_checkpoint(const std::filesystem::path& path, const PairClassifier& model,
                            const HeaderFields& extra = {}) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write checkpoint " + path.string());
  HeaderFields header = extra;
  for (auto& [k, v] : config_to_header(model.config)) header[k] = v;
  out << kCheckpointMagic << '\n';
  for (const auto& [k, v] : header) {
    if (k.find_first_of("=\n") != std::string::npos || v.find('\n') != std::string::npos) {
      throw UsageError("checkpoint header entry '" + k + "' contains a reserved character");
    }
    out << k << '=' << v << '\n';
  }
  out << '\n';
  const auto params = model.parameters();
  detail::write_le<std::uint64_t>(out, params.size());
  for (const auto& p : params) {
    detail::write_le<std::uint32_t>(out, static_cast<std::uint32_t>(p.name.size()));
    out.write(p.name.data(), static_cast<std::streamsize>(p.name.size()));
    detail::write_le<std::uint32_t>(out, static_cast<std::uint32_t>(p.tensor.rank()));
    for (auto e : p.tensor.shape()) detail::write_le<std::uint64_t>(out, e);
    for (double x : p.tensor.data()) detail::write_le<double>(out, x);
  }
  if (!out) throw IoError("failed writing checkpoint " + path.string());
}

struct LoadedCheckpoint {
  PairClassifier model;
  HeaderFields header;
};

inline LoadedCheckpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open checkpoint " + path.string());
  std::string line;
  if (!std::getline(in, line) || line != kCheckpointMagic) {
    throw FormatError(path.string() + " is not a checkpoint");
  }
  HeaderFields header;
  while (std::getline(in, line) && !line.empty()) {
    auto eq = line.find('=');
    if (eq == std::string::npos) throw FormatError("malformed checkpoint header line: " + line);
    header[line.substr(0, eq)] = line.substr(eq + 1);
  }
  const ModelConfig config = config_from_header(header);
  // Seed is irrelevant: every value is overwritten below.
  PairClassifier model = PairClassifier::init(config, 0);
  auto params = model.parameters();
  const auto count = detail::read_le<std::uint64_t>(in);
  if (count != params.size()) {
    throw FormatError("checkpoint holds " + std::to_string(count) + " tensors, model expects " +
                      std::to_string(params.size()));
  }
  for (auto& p : params) {
    const auto name_len = detail::read_le<std::uint32_t>(in);
    std::string name(name_len, '\0');
    if (!in.read(name.data(), name_len)) throw FormatError("checkpoint truncated");
    if (name != p.name) throw FormatError("checkpoint tensor '" + name + "' where '" + p.name + "' expected");
    const auto rank = detail::read_le<std::uint32_t>(in);
    Shape shape(rank);
    for (auto& e : shape) e = detail::read_le<std::uint64_t>(in);
    if (shape != p.tensor.shape()) {
      throw FormatError("tensor '" + name + "' has shape " + shape_str(shape) + ", expected " +
                        shape_str(p.tensor.shape()));
    }
    for (auto& x : p.tensor.mutable_data()) x = detail::read_le<double>(in);
  }
  return {std::move(model), std::move(header)};
}

}  // namespace conflict
