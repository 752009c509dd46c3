#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <functional>
#include <numeric>
#include <random>
#include <span>
#include <sstream>
#include <string>
#include <vector>

#include "conflict/model.hpp"
#include "conflict/tensor.hpp"

namespace conflict {

struct TrainConfig {
  std::size_t epochs = 2;
  std::size_t batch_size = 64;
  double lr = 1e-3;
  double adam_beta1 = 0.9;
  double adam_beta2 = 0.999;
  double adam_eps = 1e-8;
  std::uint64_t seed = 0;
  std::size_t smoothing_window = 8;
  double clip_norm = 0.0;  // global gradient-norm clip; 0 disables

  void validate() const {
    if (batch_size < 1) throw ConfigError("batch_size must be >= 1");
    if (!(lr >= 0.0)) throw ConfigError("lr must be non-negative");
    if (!(adam_beta1 > 0.0 && adam_beta1 < 1.0)) throw ConfigError("adam_beta1 must lie in (0, 1)");
    if (!(adam_beta2 > 0.0 && adam_beta2 < 1.0)) throw ConfigError("adam_beta2 must lie in (0, 1)");
    if (!(adam_eps > 0.0)) throw ConfigError("adam_eps must be positive");
    if (smoothing_window < 1) throw ConfigError("smoothing_window must be >= 1");
    if (clip_norm < 0.0) throw ConfigError("clip_norm must be non-negative");
  }
};

/// First and second moment estimates, one buffer per parameter.
struct AdamState {
  std::vector<std::vector<double>> m;
  std::vector<std::vector<double>> v;
  std::uint64_t step = 0;

  static AdamState for_parameters(std::span<const NamedParameter> params) {
    AdamState s;
    for (const auto& p : params) {
      s.m.emplace_back(p.tensor.size(), 0.0);
      s.v.emplace_back(p.tensor.size(), 0.0);
    }
    return s;
  }
};

/// One bias-corrected Adam update from the gradients currently stored on `params`.
inline void adam_step(std::span<const NamedParameter> params, AdamState& state, const TrainConfig& config) {
  if (state.m.size() != params.size()) throw UsageError("adam_step: optimizer state does not match parameters");
  for (std::size_t k = 0; k < params.size(); ++k) {
    if (params[k].tensor.size() != state.m[k].size()) {
      throw DimensionError("adam_step: moment buffer for '" + params[k].name + "' has the wrong size");
    }
    for (double g : params[k].tensor.grad()) {
      if (!std::isfinite(g)) throw NumericError("adam_step: non-finite gradient in '" + params[k].name + "'");
    }
  }
  ++state.step;
  const double t = static_cast<double>(state.step);
  const double correction1 = 1.0 - std::pow(config.adam_beta1, t);
  const double correction2 = 1.0 - std::pow(config.adam_beta2, t);
  for (std::size_t k = 0; k < params.size(); ++k) {
    Tensor param = params[k].tensor;
    auto theta = param.mutable_data();
    auto grad = param.grad();
    auto& m = state.m[k];
    auto& v = state.v[k];
    for (std::size_t i = 0; i < theta.size(); ++i) {
      const double g = grad[i];
      m[i] = config.adam_beta1 * m[i] + (1.0 - config.adam_beta1) * g;
      v[i] = config.adam_beta2 * v[i] + (1.0 - config.adam_beta2) * g * g;
      const double m_hat = m[i] / correction1;
      const double v_hat = v[i] / correction2;
      theta[i] -= config.lr * m_hat / (std::sqrt(v_hat) + config.adam_eps);
    }
  }
}

inline void zero_grad(std::span<const NamedParameter> params) {
  for (const auto& p : params) {
    Tensor t = p.tensor;
    t.zero_grad();
  }
}

/// Scales all gradients so their global L2 norm is at most `max_norm`. Returns the pre-clip norm.
inline double clip_grad_norm(std::span<const NamedParameter> params, double max_norm) {
  double sq = 0.0;
  for (const auto& p : params)
    for (double g : p.tensor.grad()) sq += g * g;
  const double norm = std::sqrt(sq);
  if (max_norm > 0.0 && norm > max_norm) {
    const double f = max_norm / norm;
    for (const auto& p : params) {
      Tensor t = p.tensor;
      for (auto& g : t.mutable_grad()) g *= f;
    }
  }
  return norm;
}

/// A pair of token-id sequences with its label.
struct EncodedPair {
  std::vector<TokenId> q1;
  std::vector<TokenId> q2;
  std::size_t label = 0;
};

struct StepRecord {
  std::size_t step;
  double loss;
};

struct EvalRecord {
  std::string split;
  double accuracy;
  double cross_entropy;
};

struct MetricsLog {
  std::vector<StepRecord> steps;
  std::vector<EvalRecord> evals;

  std::vector<double> losses() const {
    std::vector<double> out;
    out.reserve(steps.size());
    for (const auto& s : steps) out.push_back(s.loss);
    return out;
  }

  /// `step,loss` rows; values printed with round-trip precision.
  std::string steps_csv() const {
    std::ostringstream os;
    os.precision(17);
    os << "step,loss\n";
    for (const auto& s : steps) os << s.step << ',' << s.loss << '\n';
    return os.str();
  }

  std::string evals_csv() const {
    std::ostringstream os;
    os.precision(17);
    os << "split,accuracy,cross_entropy\n";
    for (const auto& e : evals) os << e.split << ',' << e.accuracy << ',' << e.cross_entropy << '\n';
    return os.str();
  }

  void write(const std::filesystem::path& steps_path, const std::filesystem::path& evals_path) const {
    auto dump = [](const std::filesystem::path& p, const std::string& text) {
      std::ofstream out(p, std::ios::binary);
      if (!out) throw IoError("cannot write metrics file " + p.string());
      out << text;
    };
    dump(steps_path, steps_csv());
    dump(evals_path, evals_csv());
  }

  static std::vector<EvalRecord> read_evals_csv(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot read metrics file " + path.string());
    std::string line;
    std::getline(in, line);
    if (line != "split,accuracy,cross_entropy") throw FormatError("unexpected metrics header in " + path.string());
    std::vector<EvalRecord> out;
    while (std::getline(in, line)) {
      std::istringstream row(line);
      std::string split, acc, ce;
      if (!std::getline(row, split, ',') || !std::getline(row, acc, ',') || !std::getline(row, ce)) {
        throw FormatError("malformed metrics row: " + line);
      }
      out.push_back({split, std::stod(acc), std::stod(ce)});
    }
    return out;
  }
};

/// Trailing moving average; the first window−1 entries average the available prefix.
inline std::vector<double> smooth_curve(std::span<const double> values, std::size_t window) {
  if (window < 1) throw ConfigError("smoothing window must be >= 1");
  std::vector<double> out(values.size());
  for (std::size_t i = 0; i < values.size(); ++i) {
    const std::size_t n = std::min(i + 1, window);
    double s = 0.0;
    for (std::size_t j = i + 1 - n; j <= i; ++j) s += values[j];
    out[i] = s / static_cast<double>(n);
  }
  return out;
}

struct EvalResult {
  double accuracy = 0.0;
  double cross_entropy = 0.0;
};

/// Dropout off, no graph recorded; parameters are untouched.
inline EvalResult evaluate(const PairClassifier& model, std::span<const EncodedPair> data) {
  if (data.empty()) throw UsageError("evaluate: empty dataset");
  NoGradGuard no_grad;
  std::size_t correct = 0;
  double ce = 0.0;
  for (const auto& ex : data) {
    const Tensor logits = forward_pair(ex.q1, ex.q2, model, false);
    if (predict(logits).label == ex.label) ++correct;
    const std::size_t label[1] = {ex.label};
    ce += cross_entropy_logits(logits, label).item();
  }
  const double n = static_cast<double>(data.size());
  return {static_cast<double>(correct) / n, ce / n};
}

/// Called after every optimizer step with (step, batch loss).
using StepCallback = std::function<void(std::size_t, double)>;

/// Mini-batch Adam: shuffle per epoch, forward, mean cross-entropy, backward,
/// update, zero gradients. Deterministic for a fixed config.seed.
inline MetricsLog train(PairClassifier& model, std::span<const EncodedPair> data, const TrainConfig& config,
                        const StepCallback& on_step = {}) {
  config.validate();
  if (data.empty()) throw UsageError("train: empty dataset");
  const auto params = model.parameters();
  AdamState state = AdamState::for_parameters(params);
  std::mt19937_64 shuffle_rng(config.seed);
  std::mt19937_64 dropout_rng(config.seed ^ 0x9E3779B97F4A7C15ULL);
  std::vector<std::size_t> order(data.size());
  MetricsLog log;
  std::size_t step = 0;
  zero_grad(params);
  for (std::size_t epoch = 0; epoch < config.epochs; ++epoch) {
    std::iota(order.begin(), order.end(), 0);
    std::shuffle(order.begin(), order.end(), shuffle_rng);
    for (std::size_t start = 0; start < order.size(); start += config.batch_size) {
      const std::size_t end = std::min(order.size(), start + config.batch_size);
      std::vector<Tensor> logits;
      std::vector<std::size_t> labels;
      logits.reserve(end - start);
      for (std::size_t k = start; k < end; ++k) {
        const auto& ex = data[order[k]];
        logits.push_back(forward_pair(ex.q1, ex.q2, model, true, &dropout_rng));
        labels.push_back(ex.label);
      }
      const Tensor loss = cross_entropy_logits(concat(logits, 0), labels);
      if (!std::isfinite(loss.item())) {
        throw NumericError("train: non-finite loss at step " + std::to_string(step + 1));
      }
      backward(loss);
      if (config.clip_norm > 0.0) clip_grad_norm(params, config.clip_norm);
      adam_step(params, state, config);
      zero_grad(params);
      ++step;
      log.steps.push_back({step, loss.item()});
      if (on_step) on_step(step, loss.item());
    }
  }
  return log;
}

}  // namespace conflict
