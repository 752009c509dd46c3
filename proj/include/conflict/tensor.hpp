#pragma once

// Dense float64 tensors with tape-based reverse-mode differentiation.
//
// Every operation returns a fresh Tensor whose node remembers its parents and
// a backward rule. backward(loss) collects the reachable nodes, orders them by
// creation sequence (the tape) and replays the rules in reverse.

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <initializer_list>
#include <limits>
#include <memory>
#include <optional>
#include <random>
#include <span>
#include <sstream>
#include <string>
#include <unordered_set>
#include <utility>
#include <vector>

#include "conflict/errors.hpp"

namespace conflict {

using Shape = std::vector<std::size_t>;

inline std::size_t numel(const Shape& shape) {
  std::size_t n = 1;
  for (auto e : shape) n *= e;
  return n;
}

inline std::string shape_str(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) os << 'x';
    os << shape[i];
  }
  os << ']';
  return os.str();
}

namespace detail {

struct Node {
  Shape shape;
  std::vector<double> data;
  std::vector<double> grad;  // empty unless requires_grad
  bool requires_grad = false;
  bool leaf = true;
  std::uint64_t seq = 0;
  std::vector<std::shared_ptr<Node>> parents;
  std::function<void(Node&)> backward_fn;
};

inline std::uint64_t next_seq() {
  static std::atomic<std::uint64_t> counter{0};
  return counter.fetch_add(1, std::memory_order_relaxed) + 1;
}

inline bool& grad_disabled() {
  thread_local bool disabled = false;
  return disabled;
}

}  // namespace detail

/// While alive, operations on this thread record no graph (inference mode).
class NoGradGuard {
 public:
  NoGradGuard() : previous_(detail::grad_disabled()) { detail::grad_disabled() = true; }
  ~NoGradGuard() { detail::grad_disabled() = previous_; }
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool previous_;
};

class Tensor {
 public:
  Tensor() = default;

  Tensor(Shape shape, std::vector<double> data, bool requires_grad = false)
      : node_(std::make_shared<detail::Node>()) {
    if (shape.empty()) throw DimensionError("tensor shape must have at least one extent");
    for (auto e : shape) {
      if (e == 0) throw DimensionError("tensor extents must be positive, got " + shape_str(shape));
    }
    if (numel(shape) != data.size()) {
      throw DimensionError("shape " + shape_str(shape) + " holds " + std::to_string(numel(shape)) +
                           " values but " + std::to_string(data.size()) + " were given");
    }
    node_->shape = std::move(shape);
    node_->data = std::move(data);
    node_->requires_grad = requires_grad;
    node_->seq = detail::next_seq();
    if (requires_grad) node_->grad.assign(node_->data.size(), 0.0);
  }

  static Tensor zeros(Shape shape, bool requires_grad = false) {
    auto n = numel(shape);
    return Tensor(std::move(shape), std::vector<double>(n, 0.0), requires_grad);
  }

  static Tensor full(Shape shape, double value, bool requires_grad = false) {
    auto n = numel(shape);
    return Tensor(std::move(shape), std::vector<double>(n, value), requires_grad);
  }

  static Tensor scalar(double value, bool requires_grad = false) {
    return Tensor({1}, {value}, requires_grad);
  }

  static Tensor from_rows(std::initializer_list<std::initializer_list<double>> rows,
                          bool requires_grad = false) {
    if (rows.size() == 0) throw DimensionError("from_rows needs at least one row");
    const std::size_t cols = rows.begin()->size();
    std::vector<double> data;
    data.reserve(rows.size() * cols);
    for (const auto& r : rows) {
      if (r.size() != cols) throw DimensionError("ragged rows in from_rows");
      data.insert(data.end(), r.begin(), r.end());
    }
    return Tensor({rows.size(), cols}, std::move(data), requires_grad);
  }

  bool defined() const { return static_cast<bool>(node_); }
  const Shape& shape() const { return node_->shape; }
  std::size_t rank() const { return node_->shape.size(); }
  std::size_t size() const { return node_->data.size(); }
  std::size_t rows() const { return rank() == 2 ? node_->shape[0] : 1; }
  std::size_t cols() const { return node_->shape.back(); }

  std::span<const double> data() const { return node_->data; }
  /// Direct write access; reserved for parameter initialisation and optimizer updates.
  std::span<double> mutable_data() { return node_->data; }

  bool requires_grad() const { return node_->requires_grad; }
  std::span<const double> grad() const { return node_->grad; }
  std::span<double> mutable_grad() { return node_->grad; }

  double item() const {
    if (size() != 1) throw UsageError("item() on tensor of shape " + shape_str(shape()));
    return node_->data[0];
  }
  double operator[](std::size_t i) const { return node_->data[i]; }
  double operator()(std::size_t r, std::size_t c) const { return node_->data[r * cols() + c]; }

  void zero_grad() { std::fill(node_->grad.begin(), node_->grad.end(), 0.0); }

  /// Independent leaf holding a copy of the values.
  Tensor detach(bool requires_grad = false) const {
    return Tensor(node_->shape, node_->data, requires_grad);
  }

  detail::Node* node() const { return node_.get(); }
  const std::shared_ptr<detail::Node>& shared_node() const { return node_; }

 private:
  std::shared_ptr<detail::Node> node_;
};

namespace detail {

inline Tensor make_result(Shape shape, std::vector<double> data, std::vector<Tensor> parents,
                          std::function<void(Node&)> backward_fn) {
  Tensor out(std::move(shape), std::move(data), false);
  if (grad_disabled()) return out;
  bool any = false;
  for (const auto& p : parents) any = any || p.requires_grad();
  if (!any) return out;
  Node* n = out.node();
  n->requires_grad = true;
  n->leaf = false;
  n->grad.assign(n->data.size(), 0.0);
  n->parents.reserve(parents.size());
  for (auto& p : parents) n->parents.push_back(p.shared_node());
  n->backward_fn = std::move(backward_fn);
  return out;
}

inline void require_rank2(const Tensor& t, const char* op) {
  if (t.rank() != 2) {
    throw DimensionError(std::string(op) + " expects a matrix, got shape " + shape_str(t.shape()));
  }
}

inline void require_same_shape(const Tensor& a, const Tensor& b, const char* op) {
  if (a.shape() != b.shape()) {
    throw DimensionError(std::string(op) + ": shape mismatch " + shape_str(a.shape()) + " vs " +
                         shape_str(b.shape()));
  }
}

inline void require_finite(const Tensor& t, const char* op) {
  for (double x : t.data()) {
    if (!std::isfinite(x)) throw NumericError(std::string(op) + ": non-finite input value");
  }
}

inline void accumulate(Node& parent, std::span<const double> delta) {
  if (!parent.requires_grad) return;
  for (std::size_t i = 0; i < delta.size(); ++i) parent.grad[i] += delta[i];
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Linear algebra

inline Tensor matmul(const Tensor& a, const Tensor& b) {
  detail::require_rank2(a, "matmul");
  detail::require_rank2(b, "matmul");
  const std::size_t m = a.shape()[0], k = a.shape()[1], n = b.shape()[1];
  if (b.shape()[0] != k) {
    throw DimensionError("matmul: inner extents differ, " + shape_str(a.shape()) + " · " +
                         shape_str(b.shape()));
  }
  std::vector<double> out(m * n, 0.0);
  auto A = a.data();
  auto B = b.data();
  for (std::size_t i = 0; i < m; ++i) {
    double* row = out.data() + i * n;
    for (std::size_t p = 0; p < k; ++p) {
      const double aip = A[i * k + p];
      if (aip == 0.0) continue;
      const double* brow = B.data() + p * n;
      for (std::size_t j = 0; j < n; ++j) row[j] += aip * brow[j];
    }
  }
  return detail::make_result({m, n}, std::move(out), {a, b}, [m, k, n](detail::Node& self) {
    auto& na = *self.parents[0];
    auto& nb = *self.parents[1];
    const double* g = self.grad.data();
    if (na.requires_grad) {
      // dA = G · Bᵀ
      for (std::size_t i = 0; i < m; ++i) {
        for (std::size_t p = 0; p < k; ++p) {
          const double* brow = nb.data.data() + p * n;
          const double* grow = g + i * n;
          double s = 0.0;
          for (std::size_t j = 0; j < n; ++j) s += grow[j] * brow[j];
          na.grad[i * k + p] += s;
        }
      }
    }
    if (nb.requires_grad) {
      // dB = Aᵀ · G
      for (std::size_t i = 0; i < m; ++i) {
        const double* grow = g + i * n;
        for (std::size_t p = 0; p < k; ++p) {
          const double aip = na.data[i * k + p];
          if (aip == 0.0) continue;
          double* gb = nb.grad.data() + p * n;
          for (std::size_t j = 0; j < n; ++j) gb[j] += aip * grow[j];
        }
      }
    }
  });
}

inline Tensor transpose(const Tensor& a) {
  detail::require_rank2(a, "transpose");
  const std::size_t m = a.shape()[0], n = a.shape()[1];
  std::vector<double> out(m * n);
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j) out[j * m + i] = a.data()[i * n + j];
  return detail::make_result({n, m}, std::move(out), {a}, [m, n](detail::Node& self) {
    auto& p = *self.parents[0];
    for (std::size_t i = 0; i < m; ++i)
      for (std::size_t j = 0; j < n; ++j) p.grad[i * n + j] += self.grad[j * m + i];
  });
}

// ---------------------------------------------------------------------------
// Element-wise

enum class ElementwiseOp { kAdd, kSub, kMul, kTanh };

inline Tensor add(const Tensor& a, const Tensor& b) {
  detail::require_same_shape(a, b, "add");
  std::vector<double> out(a.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a[i] + b[i];
  return detail::make_result(a.shape(), std::move(out), {a, b}, [](detail::Node& self) {
    detail::accumulate(*self.parents[0], self.grad);
    detail::accumulate(*self.parents[1], self.grad);
  });
}

inline Tensor sub(const Tensor& a, const Tensor& b) {
  detail::require_same_shape(a, b, "sub");
  std::vector<double> out(a.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a[i] - b[i];
  return detail::make_result(a.shape(), std::move(out), {a, b}, [](detail::Node& self) {
    detail::accumulate(*self.parents[0], self.grad);
    auto& nb = *self.parents[1];
    if (nb.requires_grad)
      for (std::size_t i = 0; i < self.grad.size(); ++i) nb.grad[i] -= self.grad[i];
  });
}

inline Tensor mul(const Tensor& a, const Tensor& b) {
  detail::require_same_shape(a, b, "mul");
  std::vector<double> out(a.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a[i] * b[i];
  return detail::make_result(a.shape(), std::move(out), {a, b}, [](detail::Node& self) {
    auto& na = *self.parents[0];
    auto& nb = *self.parents[1];
    for (std::size_t i = 0; i < self.grad.size(); ++i) {
      if (na.requires_grad) na.grad[i] += self.grad[i] * nb.data[i];
      if (nb.requires_grad) nb.grad[i] += self.grad[i] * na.data[i];
    }
  });
}

inline Tensor tanh(const Tensor& a) {
  std::vector<double> out(a.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = std::tanh(a[i]);
  return detail::make_result(a.shape(), std::move(out), {a}, [](detail::Node& self) {
    auto& p = *self.parents[0];
    for (std::size_t i = 0; i < self.grad.size(); ++i)
      p.grad[i] += self.grad[i] * (1.0 - self.data[i] * self.data[i]);
  });
}

inline Tensor sigmoid(const Tensor& a) {
  std::vector<double> out(a.size());
  for (std::size_t i = 0; i < out.size(); ++i) {
    const double x = a[i];
    // Branch keeps exp() from overflowing for large |x|.
    if (x >= 0) {
      out[i] = 1.0 / (1.0 + std::exp(-x));
    } else {
      const double e = std::exp(x);
      out[i] = e / (1.0 + e);
    }
  }
  return detail::make_result(a.shape(), std::move(out), {a}, [](detail::Node& self) {
    auto& p = *self.parents[0];
    for (std::size_t i = 0; i < self.grad.size(); ++i)
      p.grad[i] += self.grad[i] * self.data[i] * (1.0 - self.data[i]);
  });
}

/// Dispatching form; tanh ignores b.
inline Tensor elementwise(ElementwiseOp op, const Tensor& a, const Tensor& b = Tensor()) {
  switch (op) {
    case ElementwiseOp::kAdd:
      return add(a, b);
    case ElementwiseOp::kSub:
      return sub(a, b);
    case ElementwiseOp::kMul:
      return mul(a, b);
    case ElementwiseOp::kTanh:
      return tanh(a);
  }
  throw UsageError("unknown elementwise op");
}

inline Tensor scale(const Tensor& a, double factor) {
  std::vector<double> out(a.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a[i] * factor;
  return detail::make_result(a.shape(), std::move(out), {a}, [factor](detail::Node& self) {
    auto& p = *self.parents[0];
    for (std::size_t i = 0; i < self.grad.size(); ++i) p.grad[i] += self.grad[i] * factor;
  });
}

/// m[r×c] + row[1×c] added to every row. The only broadcast supported.
inline Tensor add_row(const Tensor& m, const Tensor& row) {
  detail::require_rank2(m, "add_row");
  const std::size_t r = m.shape()[0], c = m.shape()[1];
  if (row.size() != c || (row.rank() == 2 && row.shape()[0] != 1)) {
    throw DimensionError("add_row: row " + shape_str(row.shape()) + " does not broadcast over " +
                         shape_str(m.shape()));
  }
  std::vector<double> out(r * c);
  for (std::size_t i = 0; i < r; ++i)
    for (std::size_t j = 0; j < c; ++j) out[i * c + j] = m[i * c + j] + row[j];
  return detail::make_result(m.shape(), std::move(out), {m, row}, [r, c](detail::Node& self) {
    detail::accumulate(*self.parents[0], self.grad);
    auto& nb = *self.parents[1];
    if (!nb.requires_grad) return;
    for (std::size_t i = 0; i < r; ++i)
      for (std::size_t j = 0; j < c; ++j) nb.grad[j] += self.grad[i * c + j];
  });
}

inline Tensor sum(const Tensor& a) {
  double s = 0.0;
  for (double x : a.data()) s += x;
  return detail::make_result({1}, {s}, {a}, [](detail::Node& self) {
    auto& p = *self.parents[0];
    for (auto& g : p.grad) g += self.grad[0];
  });
}

// ---------------------------------------------------------------------------
// Normalisation

/// Row-wise softmax over the first `valid_cols` columns; remaining columns are
/// filled with -1e30 before normalisation and then forced to exactly zero.
inline Tensor masked_softmax_rows(const Tensor& a, std::size_t valid_cols) {
  detail::require_rank2(a, "softmax_rows");
  detail::require_finite(a, "softmax_rows");
  const std::size_t m = a.shape()[0], n = a.shape()[1];
  if (valid_cols == 0) throw DataError("softmax_rows: every column is masked");
  if (valid_cols > n) throw DimensionError("softmax_rows: valid column count exceeds width");
  constexpr double kMaskFill = -1e30;
  std::vector<double> out(m * n);
  for (std::size_t i = 0; i < m; ++i) {
    double* row = out.data() + i * n;
    for (std::size_t j = 0; j < n; ++j) row[j] = j < valid_cols ? a[i * n + j] : kMaskFill;
    const double mx = *std::max_element(row, row + n);
    double z = 0.0;
    for (std::size_t j = 0; j < n; ++j) {
      row[j] = std::exp(row[j] - mx);
      z += row[j];
    }
    for (std::size_t j = 0; j < n; ++j) row[j] = j < valid_cols ? row[j] / z : 0.0;
  }
  return detail::make_result(a.shape(), std::move(out), {a}, [m, n](detail::Node& self) {
    auto& p = *self.parents[0];
    for (std::size_t i = 0; i < m; ++i) {
      const double* s = self.data.data() + i * n;
      const double* g = self.grad.data() + i * n;
      double dot = 0.0;
      for (std::size_t j = 0; j < n; ++j) dot += g[j] * s[j];
      for (std::size_t j = 0; j < n; ++j) p.grad[i * n + j] += s[j] * (g[j] - dot);
    }
  });
}

inline Tensor softmax_rows(const Tensor& a) {
  detail::require_rank2(a, "softmax_rows");
  return masked_softmax_rows(a, a.shape()[1]);
}

/// Mean negative log-softmax of the true class over a batch of logits [batch×classes].
inline Tensor cross_entropy_logits(const Tensor& logits, std::span<const std::size_t> labels) {
  detail::require_rank2(logits, "cross_entropy_logits");
  const std::size_t b = logits.shape()[0], c = logits.shape()[1];
  if (labels.size() != b) {
    throw DimensionError("cross_entropy_logits: " + std::to_string(labels.size()) +
                         " labels for batch of " + std::to_string(b));
  }
  for (auto y : labels) {
    if (y >= c) throw DataError("cross_entropy_logits: label " + std::to_string(y) + " out of range");
  }
  detail::require_finite(logits, "cross_entropy_logits");
  std::vector<double> probs(b * c);
  double total = 0.0;
  for (std::size_t i = 0; i < b; ++i) {
    const double* x = logits.data().data() + i * c;
    const double mx = *std::max_element(x, x + c);
    double z = 0.0;
    for (std::size_t j = 0; j < c; ++j) z += std::exp(x[j] - mx);
    const double lse = mx + std::log(z);
    total += lse - x[labels[i]];
    for (std::size_t j = 0; j < c; ++j) probs[i * c + j] = std::exp(x[j] - lse);
  }
  std::vector<std::size_t> ys(labels.begin(), labels.end());
  return detail::make_result(
      {1}, {total / static_cast<double>(b)}, {logits},
      [b, c, probs = std::move(probs), ys = std::move(ys)](detail::Node& self) {
        auto& p = *self.parents[0];
        const double g = self.grad[0] / static_cast<double>(b);
        for (std::size_t i = 0; i < b; ++i)
          for (std::size_t j = 0; j < c; ++j)
            p.grad[i * c + j] += g * (probs[i * c + j] - (j == ys[i] ? 1.0 : 0.0));
      });
}

// ---------------------------------------------------------------------------
// Structural

/// Concatenate along `axis` (0 = rows, 1 = columns for matrices; 0 for vectors).
inline Tensor concat(const std::vector<Tensor>& parts, std::size_t axis) {
  if (parts.empty()) throw DimensionError("concat of an empty list");
  const std::size_t rank = parts.front().rank();
  if (rank > 2 || axis >= rank) throw DimensionError("concat: unsupported axis/rank");
  for (const auto& t : parts) {
    if (t.rank() != rank) throw DimensionError("concat: mixed ranks");
    for (std::size_t d = 0; d < rank; ++d) {
      if (d != axis && t.shape()[d] != parts.front().shape()[d]) {
        throw DimensionError("concat: incompatible extents " + shape_str(parts.front().shape()) +
                             " and " + shape_str(t.shape()));
      }
    }
  }
  if (parts.size() == 1) return parts.front();

  Shape shape = parts.front().shape();
  shape[axis] = 0;
  for (const auto& t : parts) shape[axis] += t.shape()[axis];
  const std::size_t rows = rank == 2 ? shape[0] : 1;
  const std::size_t cols = shape.back();

  std::vector<double> out(numel(shape));
  std::vector<std::size_t> offsets;  // along axis
  std::size_t offset = 0;
  for (const auto& t : parts) {
    offsets.push_back(offset);
    const std::size_t tc = t.cols(), tr = t.rows();
    for (std::size_t i = 0; i < tr; ++i) {
      for (std::size_t j = 0; j < tc; ++j) {
        const std::size_t oi = (rank == 2 && axis == 0) ? offset + i : i;
        const std::size_t oj = (rank == 2 && axis == 0) ? j : offset + j;
        out[oi * cols + oj] = t[i * tc + j];
      }
    }
    offset += t.shape()[axis];
  }
  (void)rows;
  const bool by_rows = rank == 2 && axis == 0;
  return detail::make_result(
      std::move(shape), std::move(out), parts,
      [offsets = std::move(offsets), cols, by_rows](detail::Node& self) {
        for (std::size_t k = 0; k < self.parents.size(); ++k) {
          auto& p = *self.parents[k];
          if (!p.requires_grad) continue;
          const std::size_t tc = p.shape.back();
          const std::size_t tr = p.shape.size() == 2 ? p.shape[0] : 1;
          for (std::size_t i = 0; i < tr; ++i) {
            for (std::size_t j = 0; j < tc; ++j) {
              const std::size_t oi = by_rows ? offsets[k] + i : i;
              const std::size_t oj = by_rows ? j : offsets[k] + j;
              p.grad[i * tc + j] += self.grad[oi * cols + oj];
            }
          }
        }
      });
}

/// Rows [begin, end) of a matrix.
inline Tensor slice_rows(const Tensor& a, std::size_t begin, std::size_t end) {
  detail::require_rank2(a, "slice_rows");
  const std::size_t n = a.shape()[1];
  if (begin >= end || end > a.shape()[0]) throw DimensionError("slice_rows: bad range");
  std::vector<double> out(a.data().begin() + static_cast<std::ptrdiff_t>(begin * n),
                          a.data().begin() + static_cast<std::ptrdiff_t>(end * n));
  return detail::make_result({end - begin, n}, std::move(out), {a}, [begin, n](detail::Node& self) {
    auto& p = *self.parents[0];
    for (std::size_t i = 0; i < self.grad.size(); ++i) p.grad[begin * n + i] += self.grad[i];
  });
}

/// Row lookup; gradient scatters back to the selected rows. Rows equal to
/// `frozen_row` (the padding row of an embedding table) never receive gradient.
inline Tensor gather_rows(const Tensor& table, std::span<const std::size_t> ids,
                          std::optional<std::size_t> frozen_row = std::nullopt) {
  detail::require_rank2(table, "gather_rows");
  const std::size_t vocab = table.shape()[0], dim = table.shape()[1];
  if (ids.empty()) throw DataError("gather_rows: empty id list");
  std::vector<double> out(ids.size() * dim);
  for (std::size_t t = 0; t < ids.size(); ++t) {
    if (ids[t] >= vocab) {
      throw DataError("token id " + std::to_string(ids[t]) + " >= vocabulary size " +
                      std::to_string(vocab));
    }
    std::copy_n(table.data().begin() + static_cast<std::ptrdiff_t>(ids[t] * dim), dim,
                out.begin() + static_cast<std::ptrdiff_t>(t * dim));
  }
  std::vector<std::size_t> rows(ids.begin(), ids.end());
  return detail::make_result(
      {ids.size(), dim}, std::move(out), {table},
      [rows = std::move(rows), dim, frozen_row](detail::Node& self) {
        auto& p = *self.parents[0];
        for (std::size_t t = 0; t < rows.size(); ++t) {
          if (frozen_row && rows[t] == *frozen_row) continue;
          for (std::size_t j = 0; j < dim; ++j) p.grad[rows[t] * dim + j] += self.grad[t * dim + j];
        }
      });
}

/// Column-wise mean over the first `count` rows → [1×cols].
inline Tensor mean_rows(const Tensor& a, std::size_t count) {
  detail::require_rank2(a, "mean_rows");
  const std::size_t n = a.shape()[1];
  if (count == 0) throw DataError("mean_rows: zero valid rows");
  if (count > a.shape()[0]) throw DimensionError("mean_rows: count exceeds rows");
  std::vector<double> out(n, 0.0);
  for (std::size_t i = 0; i < count; ++i)
    for (std::size_t j = 0; j < n; ++j) out[j] += a[i * n + j];
  const double inv = 1.0 / static_cast<double>(count);
  for (auto& x : out) x *= inv;
  return detail::make_result({1, n}, std::move(out), {a}, [count, n, inv](detail::Node& self) {
    auto& p = *self.parents[0];
    for (std::size_t i = 0; i < count; ++i)
      for (std::size_t j = 0; j < n; ++j) p.grad[i * n + j] += self.grad[j] * inv;
  });
}

/// Column-wise max over the first `count` rows → [1×cols]; ties route to the first row.
inline Tensor max_rows(const Tensor& a, std::size_t count) {
  detail::require_rank2(a, "max_rows");
  const std::size_t n = a.shape()[1];
  if (count == 0) throw DataError("max_rows: zero valid rows");
  if (count > a.shape()[0]) throw DimensionError("max_rows: count exceeds rows");
  std::vector<double> out(n);
  std::vector<std::size_t> arg(n, 0);
  for (std::size_t j = 0; j < n; ++j) {
    out[j] = a[j];
    for (std::size_t i = 1; i < count; ++i) {
      if (a[i * n + j] > out[j]) {
        out[j] = a[i * n + j];
        arg[j] = i;
      }
    }
  }
  return detail::make_result({1, n}, std::move(out), {a},
                             [arg = std::move(arg), n](detail::Node& self) {
                               auto& p = *self.parents[0];
                               for (std::size_t j = 0; j < n; ++j) p.grad[arg[j] * n + j] += self.grad[j];
                             });
}

/// s_ij = (u_i - v_j) · w for u [M×H], v [N×H], w [H×1].
inline Tensor pairwise_difference_scores(const Tensor& u, const Tensor& v, const Tensor& w) {
  detail::require_rank2(u, "pairwise_difference_scores");
  detail::require_rank2(v, "pairwise_difference_scores");
  const std::size_t m = u.shape()[0], n = v.shape()[0], h = u.shape()[1];
  if (v.shape()[1] != h) {
    throw DimensionError("pairwise_difference_scores: widths differ, " + shape_str(u.shape()) +
                         " vs " + shape_str(v.shape()));
  }
  if (w.size() != h) {
    throw DimensionError("pairwise_difference_scores: scorer " + shape_str(w.shape()) +
                         " does not match width " + std::to_string(h));
  }
  std::vector<double> out(m * n);
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      double s = 0.0;
      for (std::size_t k = 0; k < h; ++k) s += (u[i * h + k] - v[j * h + k]) * w[k];
      out[i * n + j] = s;
    }
  }
  return detail::make_result({m, n}, std::move(out), {u, v, w}, [m, n, h](detail::Node& self) {
    auto& nu = *self.parents[0];
    auto& nv = *self.parents[1];
    auto& nw = *self.parents[2];
    for (std::size_t i = 0; i < m; ++i) {
      for (std::size_t j = 0; j < n; ++j) {
        const double g = self.grad[i * n + j];
        if (g == 0.0) continue;
        for (std::size_t k = 0; k < h; ++k) {
          if (nu.requires_grad) nu.grad[i * h + k] += g * nw.data[k];
          if (nv.requires_grad) nv.grad[j * h + k] -= g * nw.data[k];
          if (nw.requires_grad) nw.grad[k] += g * (nu.data[i * h + k] - nv.data[j * h + k]);
        }
      }
    }
  });
}

/// Inverted dropout: survivors are scaled by 1/(1-rate); identity when not training.
inline Tensor dropout(const Tensor& a, double rate, bool training, std::mt19937_64& rng) {
  if (!(rate >= 0.0 && rate < 1.0)) {
    throw ConfigError("dropout rate must lie in [0, 1), got " + std::to_string(rate));
  }
  if (!training || rate == 0.0) return a;
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  const double keep_scale = 1.0 / (1.0 - rate);
  std::vector<double> mask(a.size());
  std::vector<double> out(a.size());
  for (std::size_t i = 0; i < a.size(); ++i) {
    mask[i] = unit(rng) < rate ? 0.0 : keep_scale;
    out[i] = a[i] * mask[i];
  }
  return detail::make_result(a.shape(), std::move(out), {a},
                             [mask = std::move(mask)](detail::Node& self) {
                               auto& p = *self.parents[0];
                               for (std::size_t i = 0; i < mask.size(); ++i)
                                 p.grad[i] += self.grad[i] * mask[i];
                             });
}

// ---------------------------------------------------------------------------
// Reverse pass

/// Reachable differentiable nodes of a loss in creation order.
class Tape {
 public:
  static Tape record(const Tensor& loss) {
    Tape tape;
    if (!loss.defined() || !loss.requires_grad()) return tape;
    std::unordered_set<const detail::Node*> seen;
    std::vector<detail::Node*> stack{loss.node()};
    seen.insert(loss.node());
    while (!stack.empty()) {
      detail::Node* n = stack.back();
      stack.pop_back();
      tape.nodes_.push_back(n);
      for (const auto& p : n->parents) {
        if (p->requires_grad && seen.insert(p.get()).second) stack.push_back(p.get());
      }
    }
    std::sort(tape.nodes_.begin(), tape.nodes_.end(),
              [](const detail::Node* a, const detail::Node* b) { return a->seq < b->seq; });
    return tape;
  }

  std::size_t size() const { return nodes_.size(); }
  std::span<detail::Node* const> nodes() const { return nodes_; }

  /// Replays backward rules in reverse recorded order, seeding d(loss)=1.
  void replay(detail::Node& loss) const {
    for (auto* n : nodes_) {
      if (!n->leaf) std::fill(n->grad.begin(), n->grad.end(), 0.0);
    }
    loss.grad[0] += 1.0;
    for (auto it = nodes_.rbegin(); it != nodes_.rend(); ++it) {
      if ((*it)->backward_fn) (*it)->backward_fn(**it);
    }
  }

 private:
  std::vector<detail::Node*> nodes_;
};

/// Accumulates d(loss)/d(x) into x.grad for every requires_grad leaf x reachable from loss.
inline void backward(const Tensor& loss) {
  if (!loss.defined()) throw UsageError("backward on an undefined tensor");
  if (loss.size() != 1) {
    throw UsageError("backward needs a scalar loss, got shape " + shape_str(loss.shape()));
  }
  if (!loss.requires_grad()) throw UsageError("backward: loss does not depend on any parameter");
  Tape::record(loss).replay(*loss.node());
}

}  // namespace conflict
