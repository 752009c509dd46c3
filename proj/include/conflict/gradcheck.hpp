#pragma once

// Central finite-difference gradient checks for single operations and for the
// whole pair classifier.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <random>
#include <string>
#include <vector>

#include "conflict/layers.hpp"
#include "conflict/model.hpp"
#include "conflict/tensor.hpp"

namespace conflict {

/// |a − n| / max(|a|, |n|, 1e-6); the floor keeps near-zero gradients from
/// turning rounding noise into large ratios.
inline double relative_error(double analytic, double numeric) {
  const double scale = std::max({std::abs(analytic), std::abs(numeric), 1e-6});
  return std::abs(analytic - numeric) / scale;
}

struct GradCheckResult {
  std::string name;
  double max_relative_error = 0.0;
  std::size_t entries_checked = 0;
  std::string worst_parameter;
};

/// Compares backward() against (f(x+h) − f(x−h)) / 2h for every entry of every
/// parameter. `loss_fn` must be deterministic and return a scalar.
inline GradCheckResult check_gradients(const std::string& name, const std::function<Tensor()>& loss_fn,
                                       const ParameterList& params, double step = 1e-5) {
  for (const auto& p : params) {
    Tensor t = p.tensor;
    t.zero_grad();
  }
  backward(loss_fn());
  GradCheckResult result;
  result.name = name;
  for (const auto& p : params) {
    Tensor t = p.tensor;
    const std::vector<double> analytic(t.grad().begin(), t.grad().end());
    auto values = t.mutable_data();
    for (std::size_t i = 0; i < values.size(); ++i) {
      const double original = values[i];
      double plus = 0.0, minus = 0.0;
      {
        NoGradGuard no_grad;
        values[i] = original + step;
        plus = loss_fn().item();
        values[i] = original - step;
        minus = loss_fn().item();
        values[i] = original;
      }
      const double numeric = (plus - minus) / (2.0 * step);
      const double err = relative_error(analytic[i], numeric);
      if (err > result.max_relative_error) {
        result.max_relative_error = err;
        result.worst_parameter = p.name + "[" + std::to_string(i) + "]";
      }
      ++result.entries_checked;
    }
    t.zero_grad();
  }
  return result;
}

namespace detail {

inline Tensor random_leaf(Shape shape, std::mt19937_64& rng, double lo = -1.0, double hi = 1.0) {
  std::uniform_real_distribution<double> dist(lo, hi);
  std::vector<double> v(numel(shape));
  for (auto& x : v) x = dist(rng);
  return Tensor(std::move(shape), std::move(v), true);
}

/// Fixed random weights turning any tensor into a scalar with a non-trivial gradient.
inline Tensor weighted_total(const Tensor& t, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> dist(-1.0, 1.0);
  std::vector<double> w(t.size());
  for (auto& x : w) x = dist(rng);
  return sum(mul(t, Tensor(t.shape(), std::move(w))));
}

}  // namespace detail

/// Finite-difference check of every differentiable primitive.
inline std::vector<GradCheckResult> run_op_gradient_suite(std::uint64_t seed = 7) {
  std::mt19937_64 rng(seed);
  using detail::random_leaf;
  using detail::weighted_total;
  std::vector<GradCheckResult> out;

  auto a = random_leaf({3, 4}, rng), b = random_leaf({4, 2}, rng), c = random_leaf({3, 4}, rng);
  auto row = random_leaf({1, 4}, rng);
  auto u = random_leaf({3, 5}, rng), v = random_leaf({4, 5}, rng), w = random_leaf({5, 1}, rng);
  auto table = random_leaf({6, 3}, rng);
  auto logits = random_leaf({5, 2}, rng, -2.0, 2.0);

  out.push_back(check_gradients("matmul", [&] { return weighted_total(matmul(a, b), 1); }, {{"a", a}, {"b", b}}));
  out.push_back(check_gradients("transpose", [&] { return weighted_total(transpose(a), 2); }, {{"a", a}}));
  out.push_back(check_gradients("add", [&] { return weighted_total(add(a, c), 3); }, {{"a", a}, {"c", c}}));
  out.push_back(check_gradients("sub", [&] { return weighted_total(sub(a, c), 4); }, {{"a", a}, {"c", c}}));
  out.push_back(check_gradients("mul", [&] { return weighted_total(mul(a, c), 5); }, {{"a", a}, {"c", c}}));
  out.push_back(check_gradients("tanh", [&] { return weighted_total(tanh(a), 6); }, {{"a", a}}));
  out.push_back(check_gradients("sigmoid", [&] { return weighted_total(sigmoid(a), 7); }, {{"a", a}}));
  out.push_back(check_gradients("scale", [&] { return weighted_total(scale(a, -1.7), 8); }, {{"a", a}}));
  out.push_back(check_gradients("add_row", [&] { return weighted_total(add_row(a, row), 9); }, {{"a", a}, {"row", row}}));
  out.push_back(check_gradients("softmax_rows", [&] { return weighted_total(softmax_rows(a), 10); }, {{"a", a}}));
  out.push_back(check_gradients("masked_softmax_rows", [&] { return weighted_total(masked_softmax_rows(a, 3), 11); },
                                {{"a", a}}));
  out.push_back(check_gradients("concat_cols", [&] { return weighted_total(concat({a, c, a}, 1), 12); },
                                {{"a", a}, {"c", c}}));
  out.push_back(check_gradients("concat_rows", [&] { return weighted_total(concat({a, row}, 0), 13); },
                                {{"a", a}, {"row", row}}));
  out.push_back(check_gradients("slice_rows", [&] { return weighted_total(slice_rows(a, 1, 3), 14); }, {{"a", a}}));
  out.push_back(check_gradients("gather_rows",
                                [&] {
                                  const std::size_t ids[] = {0, 3, 3, 5};
                                  return weighted_total(gather_rows(table, ids), 15);
                                },
                                {{"table", table}}));
  out.push_back(check_gradients("mean_rows", [&] { return weighted_total(mean_rows(a, 2), 16); }, {{"a", a}}));
  out.push_back(check_gradients("max_rows", [&] { return weighted_total(max_rows(a, 3), 17); }, {{"a", a}}));
  out.push_back(check_gradients("pairwise_difference_scores",
                                [&] { return weighted_total(pairwise_difference_scores(u, v, w), 18); },
                                {{"u", u}, {"v", v}, {"w", w}}));
  out.push_back(check_gradients("dropout",
                                [&] {
                                  std::mt19937_64 mask_rng(19);
                                  return weighted_total(dropout(a, 0.3, true, mask_rng), 19);
                                },
                                {{"a", a}}));
  out.push_back(check_gradients("cross_entropy_logits",
                                [&] {
                                  const std::size_t labels[] = {0, 1, 1, 0, 1};
                                  return cross_entropy_logits(logits, labels);
                                },
                                {{"logits", logits}}));
  out.push_back(check_gradients("sum", [&] { return sum(a); }, {{"a", a}}));
  return out;
}

/// The tiny end-to-end configuration: vocab 20, embed 4, hidden 5, sequences of 3 tokens.
inline ModelConfig tiny_gradcheck_config(InteractionMode mode) {
  ModelConfig c;
  c.vocab_size = 20;
  c.embed_dim = 4;
  c.hidden_dim = 5;
  c.mode = mode;
  c.dropout = 0.0;
  return c;
}

/// Every parameter of a tiny classifier, dropout disabled, two examples per batch.
inline GradCheckResult run_model_gradient_check(InteractionMode mode, std::uint64_t seed = 11) {
  const auto model = PairClassifier::init(tiny_gradcheck_config(mode), seed);
  const std::vector<std::vector<TokenId>> q1 = {{3, 7, 12}, {5, 5, 19}};
  const std::vector<std::vector<TokenId>> q2 = {{4, 7, 9}, {2, 18, 1}};
  const std::vector<std::size_t> labels = {1, 0};
  auto loss_fn = [&] {
    std::vector<Tensor> logits;
    for (std::size_t k = 0; k < q1.size(); ++k) logits.push_back(forward_pair(q1[k], q2[k], model, false));
    return cross_entropy_logits(concat(logits, 0), labels);
  };
  return check_gradients("model/" + std::string(to_string(mode)), loss_fn, model.parameters());
}

}  // namespace conflict
