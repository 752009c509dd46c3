#pragma once

// Pair classifier: shared encoder → interaction (u|v and, optionally, v|u) →
// mean+max pooling → four tanh dense layers → 2 logits.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "conflict/encoder.hpp"
#include "conflict/interaction.hpp"
#include "conflict/layers.hpp"
#include "conflict/tensor.hpp"

namespace conflict {

struct ModelConfig {
  std::size_t vocab_size = 0;
  std::size_t embed_dim = 64;
  std::size_t hidden_dim = 64;
  InteractionMode mode = InteractionMode::kCombined;
  std::size_t fc_layers = 4;
  double dropout = 0.2;
  bool bidirectional_pair = true;

  void validate() const {
    if (vocab_size < 2) throw ConfigError("vocab_size must be at least 2");
    if (embed_dim == 0 || hidden_dim == 0) throw ConfigError("embed_dim and hidden_dim must be positive");
    if (fc_layers == 0) throw ConfigError("fc_layers must be positive");
    if (!(dropout >= 0.0 && dropout < 1.0)) throw ConfigError("dropout must lie in [0, 1)");
  }

  std::size_t fused_width() const {
    return hidden_dim * (mode == InteractionMode::kCombined ? 3 : 2);
  }

  /// Mean and max pooled fused width, once per direction.
  std::size_t classifier_input_width() const {
    return 2 * fused_width() * (bidirectional_pair ? 2 : 1);
  }

  /// Widths of the tanh hidden layers: a geometric taper from the classifier
  /// input width towards the 2 output logits, never narrower than 2.
  std::vector<std::size_t> fc_widths() const {
    const double in = static_cast<double>(classifier_input_width());
    const double ratio = std::pow(2.0 / in, 1.0 / static_cast<double>(fc_layers + 1));
    std::vector<std::size_t> widths;
    for (std::size_t k = 1; k <= fc_layers; ++k) {
      const double w = std::round(in * std::pow(ratio, static_cast<double>(k)));
      widths.push_back(std::max<std::size_t>(2, static_cast<std::size_t>(w)));
    }
    return widths;
  }
};

/// Parameter count implied by a configuration.
inline std::size_t closed_form_parameter_count(const ModelConfig& c) {
  const std::size_t e = c.embed_dim, h = c.hidden_dim;
  std::size_t n = c.vocab_size * e;
  n += 3 * e * h + 3 * h * h + 3 * h;  // GRU layer 1
  n += 3 * h * h + 3 * h * h + 3 * h;  // GRU layer 2
  if (c.mode != InteractionMode::kConflict) n += 2 * h * h;
  if (c.mode != InteractionMode::kAttention) n += 2 * h * h + h;
  std::size_t in = c.classifier_input_width();
  for (auto w : c.fc_widths()) {
    n += in * w + w;
    in = w;
  }
  n += in * 2 + 2;
  return n;
}

struct PairClassifier {
  ModelConfig config;
  EmbeddingTable embedding;
  GruLayerParams gru1;
  GruLayerParams gru2;
  InteractionParams interaction;
  std::vector<DenseLayer> hidden;
  DenseLayer output;

  static PairClassifier init(const ModelConfig& config, std::uint64_t seed) {
    config.validate();
    std::mt19937_64 rng(seed);
    PairClassifier m;
    m.config = config;
    m.embedding = EmbeddingTable::init(config.vocab_size, config.embed_dim, rng);
    m.gru1 = GruLayerParams::init(config.embed_dim, config.hidden_dim, rng);
    m.gru2 = GruLayerParams::init(config.hidden_dim, config.hidden_dim, rng);
    m.interaction = InteractionParams::init(config.mode, config.hidden_dim, rng);
    std::size_t in = config.classifier_input_width();
    for (auto w : config.fc_widths()) {
      m.hidden.push_back(DenseLayer::init(in, w, rng));
      in = w;
    }
    m.output = DenseLayer::init(in, 2, rng);
    return m;
  }

  /// All trainable tensors in a fixed order with stable names.
  ParameterList parameters() const {
    ParameterList out{{"embedding", embedding.weights}};
    for (auto& p : gru1.parameters("gru1")) out.push_back(std::move(p));
    for (auto& p : gru2.parameters("gru2")) out.push_back(std::move(p));
    for (auto& p : interaction.parameters("interaction")) out.push_back(std::move(p));
    for (std::size_t k = 0; k < hidden.size(); ++k) {
      out.push_back({"fc" + std::to_string(k) + ".weight", hidden[k].weight});
      out.push_back({"fc" + std::to_string(k) + ".bias", hidden[k].bias});
    }
    out.push_back({"out.weight", output.weight});
    out.push_back({"out.bias", output.bias});
    return out;
  }

  std::size_t parameter_count() const {
    std::size_t n = 0;
    for (const auto& p : parameters()) n += p.tensor.size();
    return n;
  }

  void zero_grad() const {
    for (auto& p : parameters()) {
      Tensor t = p.tensor;
      t.zero_grad();
    }
  }
};

/// Concatenation of masked mean-pool and masked max-pool over the first `length` rows.
inline Tensor pool(const Tensor& fused, std::size_t length) {
  if (length == 0) throw DataError("pool: zero-length sequence");
  return concat({mean_rows(fused, length), max_rows(fused, length)}, 1);
}

struct PairForward {
  Tensor logits;  // [1×2]
  InteractionOutput forward_direction;   // u = q1, v = q2
  std::optional<InteractionOutput> reverse_direction;  // u = q2, v = q1
};

/// Full forward pass keeping the interaction outputs for inspection.
inline PairForward forward_pair_detailed(std::span<const TokenId> q1, std::span<const TokenId> q2,
                                         const PairClassifier& model, bool training,
                                         std::mt19937_64* rng = nullptr) {
  if (true_length(q1) == 0 || true_length(q2) == 0) throw DataError("forward_pair: empty sequence");
  const DropoutContext drop{model.config.dropout, training, rng};
  const auto a = encode(q1, model.embedding, model.gru1, model.gru2, drop);
  const auto b = encode(q2, model.embedding, model.gru1, model.gru2, drop);

  PairForward result;
  result.forward_direction = interact(a, b, model.interaction);
  std::vector<Tensor> pooled{pool(result.forward_direction.fused, a.length)};
  if (model.config.bidirectional_pair) {
    result.reverse_direction = interact(b, a, model.interaction);
    pooled.push_back(pool(result.reverse_direction->fused, b.length));
  }
  Tensor x = concat(pooled, 1);
  for (const auto& layer : model.hidden) x = drop.apply(tanh(layer(x)));
  result.logits = model.output(x);
  return result;
}

inline Tensor forward_pair(std::span<const TokenId> q1, std::span<const TokenId> q2,
                           const PairClassifier& model, bool training,
                           std::mt19937_64* rng = nullptr) {
  return forward_pair_detailed(q1, q2, model, training, rng).logits;
}

struct Prediction {
  std::size_t label;
  std::array<double, 2> probabilities;
};

/// Softmax over two logits; equal logits resolve to class 0.
inline Prediction predict(const Tensor& logits) {
  if (logits.size() != 2) throw DimensionError("predict expects 2 logits, got " + shape_str(logits.shape()));
  const double a = logits[0], b = logits[1];
  if (!std::isfinite(a) || !std::isfinite(b)) throw NumericError("predict: non-finite logits");
  const double mx = std::max(a, b);
  const double ea = std::exp(a - mx), eb = std::exp(b - mx);
  const double z = ea + eb;
  return {b > a ? 1u : 0u, {ea / z, eb / z}};
}

}  // namespace conflict
