#pragma once

// Attention and conflict interaction between two encoded sequences u (M words)
// and v (N words).
//
//   attention:  a_ij = tanh(u_i·Wu) · tanh(v_j·Wv)
//   conflict:   a_ij = (tanh(u_i·Wu) − tanh(v_j·Wv)) · Ws
//   both:       w_i = softmax(a_i) over valid columns, summary_i = Σ_j w_ij v_j
//
// Fused output per word of u is [u_i; summary_i] for a single head and
// [u_i; attention summary_i; conflict summary_i] when both heads run.

#include <cmath>
#include <cstddef>
#include <limits>
#include <optional>
#include <random>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "conflict/encoder.hpp"
#include "conflict/layers.hpp"
#include "conflict/tensor.hpp"

namespace conflict {

enum class InteractionMode { kAttention, kConflict, kCombined };

inline std::string_view to_string(InteractionMode mode) {
  switch (mode) {
    case InteractionMode::kAttention:
      return "attention";
    case InteractionMode::kConflict:
      return "conflict";
    case InteractionMode::kCombined:
      return "combined";
  }
  return "?";
}

inline InteractionMode parse_interaction_mode(std::string_view text) {
  if (text == "attention") return InteractionMode::kAttention;
  if (text == "conflict") return InteractionMode::kConflict;
  if (text == "combined") return InteractionMode::kCombined;
  throw ConfigError("unknown interaction mode '" + std::string(text) +
                    "' (expected attention, conflict or combined)");
}

struct AttentionHeadParams {
  Tensor wu;  // [H×H]
  Tensor wv;  // [H×H]
};

struct ConflictHeadParams {
  Tensor wu;  // [H×H]
  Tensor wv;  // [H×H]
  Tensor ws;  // [H×1]
};

/// Each head owns its own projections; the combined mode therefore carries
/// four projection matrices plus the conflict scorer.
struct InteractionParams {
  InteractionMode mode = InteractionMode::kAttention;
  std::optional<AttentionHeadParams> attention;
  std::optional<ConflictHeadParams> conflict;

  /// uniform(−1/√H, 1/√H). The attention head is drawn first, so a combined
  /// model and an attention model built from the same seed share it.
  static InteractionParams init(InteractionMode mode, std::size_t hidden, std::mt19937_64& rng) {
    if (hidden == 0) throw ConfigError("interaction width must be positive");
    const double bound = 1.0 / std::sqrt(static_cast<double>(hidden));
    InteractionParams p;
    p.mode = mode;
    if (mode != InteractionMode::kConflict) {
      p.attention = AttentionHeadParams{uniform_parameter({hidden, hidden}, bound, rng),
                                        uniform_parameter({hidden, hidden}, bound, rng)};
    }
    if (mode != InteractionMode::kAttention) {
      p.conflict = ConflictHeadParams{uniform_parameter({hidden, hidden}, bound, rng),
                                      uniform_parameter({hidden, hidden}, bound, rng),
                                      uniform_parameter({hidden, 1}, bound, rng)};
    }
    return p;
  }

  std::size_t hidden_dim() const {
    return attention ? attention->wu.shape()[0] : conflict->wu.shape()[0];
  }

  /// 2H for one head, 3H for both.
  std::size_t fused_width() const {
    return hidden_dim() * (mode == InteractionMode::kCombined ? 3 : 2);
  }

  ParameterList parameters(const std::string& prefix) const {
    ParameterList out;
    if (attention) {
      out.push_back({prefix + ".attention.wu", attention->wu});
      out.push_back({prefix + ".attention.wv", attention->wv});
    }
    if (conflict) {
      out.push_back({prefix + ".conflict.wu", conflict->wu});
      out.push_back({prefix + ".conflict.wv", conflict->wv});
      out.push_back({prefix + ".conflict.ws", conflict->ws});
    }
    return out;
  }

  void validate() const {
    const bool want_attention = mode != InteractionMode::kConflict;
    const bool want_conflict = mode != InteractionMode::kAttention;
    if (attention.has_value() != want_attention || conflict.has_value() != want_conflict) {
      throw ConfigError("interaction parameters do not match mode " + std::string(to_string(mode)));
    }
    const std::size_t h = hidden_dim();
    auto square = [h](const Tensor& t) { return t.shape() == Shape{h, h}; };
    if (attention && !(square(attention->wu) && square(attention->wv))) {
      throw DimensionError("attention projections must be HxH");
    }
    if (conflict && !(square(conflict->wu) && square(conflict->wv) && conflict->ws.size() == h)) {
      throw DimensionError("conflict projections must be HxH and the scorer Hx1");
    }
  }
};

/// Unnormalised M×N pairwise scores.
struct ScoreMatrix {
  Tensor values;
};

/// Row-stochastic M×N weights; columns at or beyond `valid_cols` are zero.
struct WeightMatrix {
  Tensor values;
  std::size_t valid_cols = 0;
};

struct InteractionOutput {
  Tensor fused;  // [M×F]
  std::size_t length = 0;  // valid rows (length of u)
  std::optional<WeightMatrix> attention_weights;
  std::optional<WeightMatrix> conflict_weights;
};

/// tanh(states·W); padded rows stay zero.
inline Tensor project(const EncodedSequence& seq, const Tensor& w) {
  if (seq.states.rank() != 2 || w.rank() != 2 || seq.states.shape()[1] != w.shape()[0]) {
    throw DimensionError("project: states " + shape_str(seq.states.shape()) +
                         " incompatible with projection " + shape_str(w.shape()));
  }
  const std::size_t steps = seq.states.shape()[0];
  if (seq.length == steps) return tanh(matmul(seq.states, w));
  const Tensor valid = tanh(matmul(slice_rows(seq.states, 0, seq.length), w));
  return concat({valid, Tensor::zeros({steps - seq.length, w.shape()[1]})}, 0);
}

/// a_ij = uL_i · vL_j
inline ScoreMatrix attention_scores(const Tensor& u_proj, const Tensor& v_proj) {
  if (u_proj.rank() != 2 || v_proj.rank() != 2 || u_proj.shape()[1] != v_proj.shape()[1]) {
    throw DimensionError("attention_scores: widths differ, " + shape_str(u_proj.shape()) + " vs " +
                         shape_str(v_proj.shape()));
  }
  return {matmul(u_proj, transpose(v_proj))};
}

/// a_ij = (uL_i − vL_j) · Ws
inline ScoreMatrix conflict_scores(const Tensor& u_proj, const Tensor& v_proj, const Tensor& ws) {
  return {pairwise_difference_scores(u_proj, v_proj, ws)};
}

inline WeightMatrix normalize(const ScoreMatrix& scores, std::size_t valid_cols) {
  return {masked_softmax_rows(scores.values, valid_cols), valid_cols};
}

/// Row i = Σ_j w_ij · v_j over the encoded (unprojected) states of v.
inline Tensor weighted_sum(const WeightMatrix& weights, const Tensor& v_states) {
  if (weights.values.rank() != 2 || v_states.rank() != 2 ||
      weights.values.shape()[1] != v_states.shape()[0]) {
    throw DimensionError("weighted_sum: weights " + shape_str(weights.values.shape()) +
                         " do not match states " + shape_str(v_states.shape()));
  }
  return matmul(weights.values, v_states);
}

/// Representation of u conditioned on v.
inline InteractionOutput interact(const EncodedSequence& u, const EncodedSequence& v,
                                  const InteractionParams& params) {
  params.validate();
  const std::size_t h = params.hidden_dim();
  if (u.states.shape()[1] != h || v.states.shape()[1] != h) {
    throw DimensionError("interact: encoded width does not match interaction width " +
                         std::to_string(h));
  }
  InteractionOutput out;
  out.length = u.length;
  std::vector<Tensor> parts{u.states};
  if (params.attention) {
    const Tensor u_proj = project(u, params.attention->wu);
    const Tensor v_proj = project(v, params.attention->wv);
    auto weights = normalize(attention_scores(u_proj, v_proj), v.length);
    parts.push_back(weighted_sum(weights, v.states));
    out.attention_weights = std::move(weights);
  }
  if (params.conflict) {
    const Tensor u_proj = project(u, params.conflict->wu);
    const Tensor v_proj = project(v, params.conflict->wv);
    auto weights = normalize(conflict_scores(u_proj, v_proj, params.conflict->ws), v.length);
    parts.push_back(weighted_sum(weights, v.states));
    out.conflict_weights = std::move(weights);
  }
  out.fused = concat(parts, 1);
  return out;
}

/// Relative slack for comparisons against 1/N: rounding in a near-uniform row
/// can land a few ulps under the exact bound.
inline constexpr double kFloorSlack = 1e-12;

struct FloorRow {
  double max_weight;
  double floor;   // 1/N over valid columns
  double margin;  // max_weight − floor
};

struct FloorReport {
  std::vector<FloorRow> rows;
  bool holds = true;
};

/// Per-row maximum softmax weight against the 1/N floor that no row can go below.
inline FloorReport attention_floor_report(const ScoreMatrix& scores,
                                          std::optional<std::size_t> valid_cols = std::nullopt) {
  const std::size_t n = valid_cols.value_or(scores.values.cols());
  FloorReport report;
  NoGradGuard no_grad;
  const auto weights = normalize(scores, n);
  const std::size_t m = weights.values.rows(), width = weights.values.cols();
  const double floor = 1.0 / static_cast<double>(n);
  for (std::size_t i = 0; i < m; ++i) {
    double mx = 0.0;
    for (std::size_t j = 0; j < n; ++j) mx = std::max(mx, weights.values[i * width + j]);
    report.rows.push_back({mx, floor, mx - floor});
    if (mx < floor * (1.0 - kFloorSlack)) report.holds = false;
  }
  if (!report.holds) throw std::logic_error("softmax row maximum fell below 1/N");
  return report;
}

struct FloorProbeResult {
  double floor;             // 1/n
  double lowest_max_weight; // smallest row maximum seen during the descent
  double final_max_weight;
};

/// Gradient descent on a single score row of length n that minimises its
/// largest softmax weight, starting from random scores.
inline FloorProbeResult adversarial_floor_probe(std::size_t n, std::size_t steps, double learning_rate,
                                                std::mt19937_64& rng) {
  if (n == 0) throw ConfigError("floor probe needs at least one column");
  std::normal_distribution<double> init(0.0, 3.0);
  std::vector<double> start(n);
  for (auto& x : start) x = init(rng);
  Tensor scores({1, n}, std::move(start), true);
  FloorProbeResult result{1.0 / static_cast<double>(n), 1.0, 1.0};
  for (std::size_t s = 0; s <= steps; ++s) {
    const Tensor largest = max_rows(transpose(softmax_rows(scores)), n);
    result.final_max_weight = largest.item();
    result.lowest_max_weight = std::min(result.lowest_max_weight, largest.item());
    if (s == steps) break;
    scores.zero_grad();
    backward(largest);
    auto values = scores.mutable_data();
    for (std::size_t j = 0; j < n; ++j) values[j] -= learning_rate * scores.grad()[j];
  }
  return result;
}

}  // namespace conflict
