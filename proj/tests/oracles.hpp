#pragma once

// Straight-line reference implementations on plain nested vectors. They share
// no code with the tape path they are compared against.

#include <cmath>
#include <cstddef>
#include <random>
#include <vector>

#include "conflict/tensor.hpp"

namespace oracle {

using Vec = std::vector<double>;
using Mat = std::vector<Vec>;

inline Mat to_mat(const conflict::Tensor& t) {
  const std::size_t r = t.rows(), c = t.cols();
  Mat m(r, Vec(c));
  for (std::size_t i = 0; i < r; ++i)
    for (std::size_t j = 0; j < c; ++j) m[i][j] = t.data()[i * c + j];
  return m;
}

inline conflict::Tensor to_tensor(const Mat& m, bool requires_grad = false) {
  std::vector<double> data;
  for (const auto& row : m) data.insert(data.end(), row.begin(), row.end());
  return conflict::Tensor({m.size(), m.front().size()}, data, requires_grad);
}

inline Mat random_mat(std::size_t r, std::size_t c, std::mt19937_64& rng, double scale = 1.0) {
  std::uniform_real_distribution<double> d(-scale, scale);
  Mat m(r, Vec(c));
  for (auto& row : m)
    for (auto& x : row) x = d(rng);
  return m;
}

inline Mat matmul(const Mat& a, const Mat& b) {
  Mat out(a.size(), Vec(b.front().size(), 0.0));
  for (std::size_t i = 0; i < a.size(); ++i)
    for (std::size_t j = 0; j < b.front().size(); ++j)
      for (std::size_t k = 0; k < b.size(); ++k) out[i][j] += a[i][k] * b[k][j];
  return out;
}

inline double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

inline Vec vec_mat(const Vec& x, const Mat& w) {
  Vec out(w.front().size(), 0.0);
  for (std::size_t j = 0; j < out.size(); ++j)
    for (std::size_t k = 0; k < x.size(); ++k) out[j] += x[k] * w[k][j];
  return out;
}

/// Row softmax over the first `valid` entries; the rest are zero.
inline Vec masked_softmax(const Vec& row, std::size_t valid) {
  double mx = row[0];
  for (std::size_t j = 1; j < valid; ++j) mx = std::max(mx, row[j]);
  double z = 0.0;
  for (std::size_t j = 0; j < valid; ++j) z += std::exp(row[j] - mx);
  Vec out(row.size(), 0.0);
  for (std::size_t j = 0; j < valid; ++j) out[j] = std::exp(row[j] - mx) / z;
  return out;
}

struct GruWeights {
  Mat wz, wr, wh, uz, ur, uh;
  Vec bz, br, bh;
};

inline Vec gru_step(const Vec& x, const Vec& h, const GruWeights& p) {
  const std::size_t n = h.size();
  const Vec xz = vec_mat(x, p.wz), xr = vec_mat(x, p.wr), xh = vec_mat(x, p.wh);
  const Vec hz = vec_mat(h, p.uz), hr = vec_mat(h, p.ur);
  Vec z(n), r(n), rh(n);
  for (std::size_t j = 0; j < n; ++j) {
    z[j] = sigmoid(xz[j] + hz[j] + p.bz[j]);
    r[j] = sigmoid(xr[j] + hr[j] + p.br[j]);
    rh[j] = r[j] * h[j];
  }
  const Vec hc = vec_mat(rh, p.uh);
  Vec out(n);
  for (std::size_t j = 0; j < n; ++j) {
    const double c = std::tanh(xh[j] + hc[j] + p.bh[j]);
    out[j] = (1.0 - z[j]) * h[j] + z[j] * c;
  }
  return out;
}

/// Runs the recurrence over `length` rows and zero-fills the rest.
inline Mat gru_sequence(const Mat& x, std::size_t length, const GruWeights& p) {
  const std::size_t n = p.uz.size();
  Mat out(x.size(), Vec(n, 0.0));
  Vec h(n, 0.0);
  for (std::size_t t = 0; t < length; ++t) {
    h = gru_step(x[t], h, p);
    out[t] = h;
  }
  return out;
}

struct InteractionWeights {
  Mat attn_wu, attn_wv;  // empty when absent
  Mat conf_wu, conf_wv;
  Vec ws;
};

/// [u_i; Σ_j w^A_ij v_j; Σ_j w^C_ij v_j] with heads present per the weights given.
inline Mat interact(const Mat& u, std::size_t u_len, const Mat& v, std::size_t v_len, const InteractionWeights& p) {
  auto project = [](const Mat& s, std::size_t len, const Mat& w) {
    Mat out(s.size(), Vec(w.front().size(), 0.0));
    for (std::size_t i = 0; i < len; ++i) {
      const Vec y = vec_mat(s[i], w);
      for (std::size_t j = 0; j < y.size(); ++j) out[i][j] = std::tanh(y[j]);
    }
    return out;
  };
  auto summary = [&](const Mat& scores) {
    Mat out(u.size(), Vec(v.front().size(), 0.0));
    for (std::size_t i = 0; i < u.size(); ++i) {
      const Vec w = masked_softmax(scores[i], v_len);
      for (std::size_t j = 0; j < v.size(); ++j)
        for (std::size_t k = 0; k < v[j].size(); ++k) out[i][k] += w[j] * v[j][k];
    }
    return out;
  };
  Mat fused = u;
  auto append = [&fused](const Mat& part) {
    for (std::size_t i = 0; i < fused.size(); ++i) fused[i].insert(fused[i].end(), part[i].begin(), part[i].end());
  };
  if (!p.attn_wu.empty()) {
    const Mat ul = project(u, u_len, p.attn_wu), vl = project(v, v_len, p.attn_wv);
    Mat scores(u.size(), Vec(v.size(), 0.0));
    for (std::size_t i = 0; i < u.size(); ++i)
      for (std::size_t j = 0; j < v.size(); ++j)
        for (std::size_t k = 0; k < ul[i].size(); ++k) scores[i][j] += ul[i][k] * vl[j][k];
    append(summary(scores));
  }
  if (!p.conf_wu.empty()) {
    const Mat ul = project(u, u_len, p.conf_wu), vl = project(v, v_len, p.conf_wv);
    Mat scores(u.size(), Vec(v.size(), 0.0));
    for (std::size_t i = 0; i < u.size(); ++i)
      for (std::size_t j = 0; j < v.size(); ++j) {
        Vec diff(ul[i].size());
        for (std::size_t k = 0; k < diff.size(); ++k) diff[k] = ul[i][k] - vl[j][k];
        for (std::size_t k = 0; k < diff.size(); ++k) scores[i][j] += diff[k] * p.ws[k];
      }
    append(summary(scores));
  }
  return fused;
}

inline double max_abs_diff(const Mat& a, const conflict::Tensor& b) {
  double worst = 0.0;
  const std::size_t c = b.cols();
  for (std::size_t i = 0; i < a.size(); ++i)
    for (std::size_t j = 0; j < a[i].size(); ++j) worst = std::max(worst, std::abs(a[i][j] - b.data()[i * c + j]));
  return worst;
}

}  // namespace oracle
