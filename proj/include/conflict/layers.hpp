#pragma once

// Shared building blocks: named parameters, initialisers, dropout context and
// the dense layer used by the classifier head.

#include <cmath>
#include <cstddef>
#include <random>
#include <string>
#include <vector>

#include "conflict/tensor.hpp"

namespace conflict {

struct NamedParameter {
  std::string name;
  Tensor tensor;
};

using ParameterList = std::vector<NamedParameter>;

inline Tensor uniform_parameter(Shape shape, double bound, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> dist(-bound, bound);
  std::vector<double> values(numel(shape));
  for (auto& x : values) x = dist(rng);
  return Tensor(std::move(shape), std::move(values), true);
}

inline Tensor normal_parameter(Shape shape, double stddev, std::mt19937_64& rng) {
  std::normal_distribution<double> dist(0.0, stddev);
  std::vector<double> values(numel(shape));
  for (auto& x : values) x = dist(rng);
  return Tensor(std::move(shape), std::move(values), true);
}

/// Dropout settings threaded through a forward pass. A null rng means eval mode.
struct DropoutContext {
  double rate = 0.0;
  bool training = false;
  std::mt19937_64* rng = nullptr;

  Tensor apply(const Tensor& x) const {
    if (!training || rate == 0.0 || rng == nullptr) return x;
    return dropout(x, rate, training, *rng);
  }
};

/// y = x·W + b
struct DenseLayer {
  Tensor weight;  // [in×out]
  Tensor bias;    // [1×out]

  static DenseLayer init(std::size_t in, std::size_t out, std::mt19937_64& rng) {
    const double bound = 1.0 / std::sqrt(static_cast<double>(in));
    return {uniform_parameter({in, out}, bound, rng), Tensor::zeros({1, out}, true)};
  }

  std::size_t in_dim() const { return weight.shape()[0]; }
  std::size_t out_dim() const { return weight.shape()[1]; }

  Tensor operator()(const Tensor& x) const { return add_row(matmul(x, weight), bias); }
};

}  // namespace conflict
