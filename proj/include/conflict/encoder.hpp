#pragma once

// Token embeddings followed by two stacked unidirectional GRU layers. The same
// parameters encode both members of a pair.

#include <cmath>
#include <cstddef>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "conflict/layers.hpp"
#include "conflict/tensor.hpp"
#include "conflict/vocabulary.hpp"

namespace conflict {

struct EmbeddingTable {
  Tensor weights;  // [vocab×dim]; row 0 is the padding row

  /// normal(0, 0.1) entries with an all-zero padding row.
  static EmbeddingTable init(std::size_t vocab_size, std::size_t dim, std::mt19937_64& rng) {
    if (vocab_size < 2 || dim == 0) throw ConfigError("embedding table needs vocab >= 2 and dim >= 1");
    EmbeddingTable table{normal_parameter({vocab_size, dim}, 0.1, rng)};
    auto w = table.weights.mutable_data();
    std::fill(w.begin(), w.begin() + static_cast<std::ptrdiff_t>(dim), 0.0);
    return table;
  }

  std::size_t vocab_size() const { return weights.shape()[0]; }
  std::size_t dim() const { return weights.shape()[1]; }
};

/// Rows of the table selected by `ids`; the padding row never receives gradient.
inline Tensor embed(std::span<const TokenId> ids, const EmbeddingTable& table) {
  return gather_rows(table.weights, ids, Vocabulary::kPad);
}

/// Standard GRU cell parameters:
///   z = σ(x·Wz + h·Uz + bz)
///   r = σ(x·Wr + h·Ur + br)
///   c = tanh(x·Wh + (r⊙h)·Uh + bh)
///   h' = (1 − z)⊙h + z⊙c
struct GruLayerParams {
  Tensor w_z, w_r, w_h;  // [D×H]
  Tensor u_z, u_r, u_h;  // [H×H]
  Tensor b_z, b_r, b_h;  // [1×H]

  /// uniform(−1/√H, 1/√H) weights, zero biases.
  static GruLayerParams init(std::size_t input_dim, std::size_t hidden_dim, std::mt19937_64& rng) {
    if (input_dim == 0 || hidden_dim == 0) throw ConfigError("GRU dimensions must be positive");
    const double bound = 1.0 / std::sqrt(static_cast<double>(hidden_dim));
    GruLayerParams p;
    p.w_z = uniform_parameter({input_dim, hidden_dim}, bound, rng);
    p.w_r = uniform_parameter({input_dim, hidden_dim}, bound, rng);
    p.w_h = uniform_parameter({input_dim, hidden_dim}, bound, rng);
    p.u_z = uniform_parameter({hidden_dim, hidden_dim}, bound, rng);
    p.u_r = uniform_parameter({hidden_dim, hidden_dim}, bound, rng);
    p.u_h = uniform_parameter({hidden_dim, hidden_dim}, bound, rng);
    p.b_z = Tensor::zeros({1, hidden_dim}, true);
    p.b_r = Tensor::zeros({1, hidden_dim}, true);
    p.b_h = Tensor::zeros({1, hidden_dim}, true);
    return p;
  }

  static GruLayerParams zeros(std::size_t input_dim, std::size_t hidden_dim) {
    GruLayerParams p;
    p.w_z = Tensor::zeros({input_dim, hidden_dim}, true);
    p.w_r = Tensor::zeros({input_dim, hidden_dim}, true);
    p.w_h = Tensor::zeros({input_dim, hidden_dim}, true);
    p.u_z = Tensor::zeros({hidden_dim, hidden_dim}, true);
    p.u_r = Tensor::zeros({hidden_dim, hidden_dim}, true);
    p.u_h = Tensor::zeros({hidden_dim, hidden_dim}, true);
    p.b_z = Tensor::zeros({1, hidden_dim}, true);
    p.b_r = Tensor::zeros({1, hidden_dim}, true);
    p.b_h = Tensor::zeros({1, hidden_dim}, true);
    return p;
  }

  std::size_t input_dim() const { return w_z.shape()[0]; }
  std::size_t hidden_dim() const { return w_z.shape()[1]; }

  ParameterList parameters(const std::string& prefix) const {
    return {{prefix + ".w_z", w_z}, {prefix + ".w_r", w_r}, {prefix + ".w_h", w_h},
            {prefix + ".u_z", u_z}, {prefix + ".u_r", u_r}, {prefix + ".u_h", u_h},
            {prefix + ".b_z", b_z}, {prefix + ".b_r", b_r}, {prefix + ".b_h", b_h}};
  }

  void validate() const {
    const std::size_t d = input_dim(), h = hidden_dim();
    auto expect = [](const Tensor& t, Shape s, const char* name) {
      if (t.shape() != s) {
        throw DimensionError(std::string("GRU parameter ") + name + " has shape " +
                             shape_str(t.shape()) + ", expected " + shape_str(s));
      }
    };
    expect(w_r, {d, h}, "w_r");
    expect(w_h, {d, h}, "w_h");
    expect(u_z, {h, h}, "u_z");
    expect(u_r, {h, h}, "u_r");
    expect(u_h, {h, h}, "u_h");
    expect(b_z, {1, h}, "b_z");
    expect(b_r, {1, h}, "b_r");
    expect(b_h, {1, h}, "b_h");
  }
};

/// Runs the recurrence over the first `length` rows of `inputs` [T×D]; rows at
/// or beyond `length` come out as exact zeros. `h0` defaults to the zero state.
inline Tensor gru_layer(const Tensor& inputs, const GruLayerParams& params, std::size_t length,
                        const Tensor& h0 = Tensor()) {
  params.validate();
  if (inputs.rank() != 2 || inputs.shape()[1] != params.input_dim()) {
    throw DimensionError("gru_layer: inputs " + shape_str(inputs.shape()) +
                         " do not match input width " + std::to_string(params.input_dim()));
  }
  const std::size_t steps = inputs.shape()[0], hidden = params.hidden_dim();
  if (length == 0 || length > steps) throw DataError("gru_layer: invalid sequence length");

  Tensor h = h0.defined() ? h0 : Tensor::zeros({1, hidden});
  if (h.size() != hidden) throw DimensionError("gru_layer: initial state has wrong width");
  if (h.rank() == 1) h = Tensor({1, hidden}, std::vector<double>(h.data().begin(), h.data().end()));

  const Tensor x = length == steps ? inputs : slice_rows(inputs, 0, length);
  const Tensor xz = add_row(matmul(x, params.w_z), params.b_z);
  const Tensor xr = add_row(matmul(x, params.w_r), params.b_r);
  const Tensor xh = add_row(matmul(x, params.w_h), params.b_h);

  std::vector<Tensor> states;
  states.reserve(length + 1);
  for (std::size_t t = 0; t < length; ++t) {
    const Tensor z = sigmoid(add(slice_rows(xz, t, t + 1), matmul(h, params.u_z)));
    const Tensor r = sigmoid(add(slice_rows(xr, t, t + 1), matmul(h, params.u_r)));
    const Tensor c = tanh(add(slice_rows(xh, t, t + 1), matmul(mul(r, h), params.u_h)));
    h = add(h, mul(z, sub(c, h)));
    states.push_back(h);
  }
  if (length < steps) states.push_back(Tensor::zeros({steps - length, hidden}));
  return concat(states, 0);
}

struct EncodedSequence {
  Tensor states;       // [T×H]; rows at or beyond `length` are zero
  std::size_t length;  // true length before padding
};

/// Number of ids before trailing padding.
inline std::size_t true_length(std::span<const TokenId> ids) {
  std::size_t n = ids.size();
  while (n > 0 && ids[n - 1] == Vocabulary::kPad) --n;
  return n;
}

/// layer2(layer1(embed(ids))), with dropout after each layer when `dropout` is training.
inline EncodedSequence encode(std::span<const TokenId> ids, const EmbeddingTable& table,
                              const GruLayerParams& layer1, const GruLayerParams& layer2,
                              const DropoutContext& dropout = {}) {
  const std::size_t length = true_length(ids);
  if (length == 0) throw DataError("encode: empty sequence");
  const Tensor embedded = embed(ids, table);
  const Tensor h1 = dropout.apply(gru_layer(embedded, layer1, length));
  const Tensor h2 = dropout.apply(gru_layer(h1, layer2, length));
  return {h2, length};
}

inline std::vector<EncodedSequence> encode_batch(const std::vector<std::vector<TokenId>>& batch,
                                                 const EmbeddingTable& table,
                                                 const GruLayerParams& layer1,
                                                 const GruLayerParams& layer2) {
  std::vector<EncodedSequence> out;
  out.reserve(batch.size());
  for (const auto& ids : batch) out.push_back(encode(ids, table, layer1, layer2));
  return out;
}

}  // namespace conflict
