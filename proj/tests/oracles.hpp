// Copyright 2026 The unlearn-lens Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

// Slow, independent reference implementations the library is checked
// against. Nothing here calls into the code under test except for plain
// data types and the model's parameter layout.

#include <algorithm>
#include <cmath>
#include <functional>
#include <numeric>
#include <vector>

#include "unlearn_lens/linalg.hpp"
#include "unlearn_lens/rng.hpp"
#include "unlearn_lens/toy_lm.hpp"

namespace oracle {

using unlearn_lens::Matrix;

inline Matrix random_matrix(std::size_t r, std::size_t c, std::uint64_t seed, double scale = 1.0) {
  unlearn_lens::Rng rng(seed);
  Matrix m(r, c);
  for (double& v : m.values()) v = scale * rng.normal();
  return m;
}

inline Matrix random_symmetric(std::size_t n, std::uint64_t seed, double scale = 1.0) {
  Matrix a = random_matrix(n, n, seed, scale);
  Matrix s(n, n);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j) s(i, j) = 0.5 * (a(i, j) + a(j, i));
  return s;
}

/// Random orthogonal matrix from Gram-Schmidt on a Gaussian matrix.
inline Matrix random_orthogonal(std::size_t n, std::uint64_t seed) {
  Matrix q = random_matrix(n, n, seed);
  for (std::size_t j = 0; j < n; ++j) {
    for (std::size_t k = 0; k < j; ++k) {
      double d = 0.0;
      for (std::size_t i = 0; i < n; ++i) d += q(i, j) * q(i, k);
      for (std::size_t i = 0; i < n; ++i) q(i, j) -= d * q(i, k);
    }
    double nn = 0.0;
    for (std::size_t i = 0; i < n; ++i) nn += q(i, j) * q(i, j);
    nn = std::sqrt(nn);
    for (std::size_t i = 0; i < n; ++i) q(i, j) /= nn;
  }
  return q;
}

inline Matrix mul(const Matrix& a, const Matrix& b) {
  Matrix c(a.rows(), b.cols());
  for (std::size_t i = 0; i < a.rows(); ++i)
    for (std::size_t k = 0; k < a.cols(); ++k)
      for (std::size_t j = 0; j < b.cols(); ++j) c(i, j) += a(i, k) * b(k, j);
  return c;
}

struct Eig {
  std::vector<double> values;                // descending
  std::vector<std::vector<double>> vectors;  // matching unit vectors
};

/// Cyclic Jacobi rotations until the off-diagonal mass is negligible.
inline Eig jacobi(const Matrix& s) {
  const std::size_t n = s.rows();
  Matrix a = s;
  Matrix v = Matrix::identity(n);
  for (int sweep = 0; sweep < 100; ++sweep) {
    double off = 0.0;
    for (std::size_t p = 0; p < n; ++p)
      for (std::size_t q = p + 1; q < n; ++q) off += a(p, q) * a(p, q);
    if (off < 1e-30) break;
    for (std::size_t p = 0; p < n; ++p) {
      for (std::size_t q = p + 1; q < n; ++q) {
        if (a(p, q) == 0.0) continue;
        const double theta = (a(q, q) - a(p, p)) / (2.0 * a(p, q));
        const double t = (theta >= 0 ? 1.0 : -1.0) / (std::abs(theta) + std::sqrt(theta * theta + 1.0));
        const double c = 1.0 / std::sqrt(t * t + 1.0);
        const double sn = t * c;
        for (std::size_t k = 0; k < n; ++k) {
          const double akp = a(k, p);
          const double akq = a(k, q);
          a(k, p) = c * akp - sn * akq;
          a(k, q) = sn * akp + c * akq;
        }
        for (std::size_t k = 0; k < n; ++k) {
          const double apk = a(p, k);
          const double aqk = a(q, k);
          a(p, k) = c * apk - sn * aqk;
          a(q, k) = sn * apk + c * aqk;
        }
        for (std::size_t k = 0; k < n; ++k) {
          const double vkp = v(k, p);
          const double vkq = v(k, q);
          v(k, p) = c * vkp - sn * vkq;
          v(k, q) = sn * vkp + c * vkq;
        }
      }
    }
  }
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](auto x, auto y) { return a(x, x) > a(y, y); });
  Eig out;
  for (std::size_t i : order) {
    out.values.push_back(a(i, i));
    std::vector<double> col(n);
    for (std::size_t k = 0; k < n; ++k) col[k] = v(k, i);
    out.vectors.push_back(std::move(col));
  }
  return out;
}

inline double spectral_norm(const Matrix& s) {
  const Eig e = jacobi(s);
  return std::max(std::abs(e.values.front()), std::abs(e.values.back()));
}

/// HSIC-based linear CKA with explicit n x n centering matrices.
inline double naive_cka(const Matrix& x, const Matrix& y) {
  const std::size_t n = x.rows();
  Matrix h(n, n);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j) h(i, j) = (i == j ? 1.0 : 0.0) - 1.0 / static_cast<double>(n);
  auto gramm = [&](const Matrix& m) {
    Matrix k(n, n);
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < n; ++j)
        for (std::size_t c = 0; c < m.cols(); ++c) k(i, j) += m(i, c) * m(j, c);
    return mul(mul(h, k), h);
  };
  const Matrix kx = gramm(x);
  const Matrix ky = gramm(y);
  auto tr = [&](const Matrix& a, const Matrix& b) {
    double t = 0.0;
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < n; ++j) t += a(i, j) * b(j, i);
    return t;
  };
  return tr(kx, ky) / std::sqrt(tr(kx, kx) * tr(ky, ky));
}

/// O(nm) pairwise AUC, ties counted half.
inline double pair_auc(const std::vector<double>& members, const std::vector<double>& nonmembers) {
  double wins = 0.0;
  for (double a : members)
    for (double b : nonmembers) wins += a > b ? 1.0 : (a == b ? 0.5 : 0.0);
  return wins / static_cast<double>(members.size() * nonmembers.size());
}

/// Central differences of `f` in every parameter.
inline unlearn_lens::ParamSet finite_difference(unlearn_lens::TinyLM model,
                                                const std::function<double(const unlearn_lens::TinyLM&)>& f,
                                                double h = 1e-5) {
  unlearn_lens::ParamSet g = model.params().zeros_like();
  for (std::size_t i = 0; i < g.count(); ++i) {
    const double w = model.params().flat(i);
    model.params().flat(i) = w + h;
    const double up = f(model);
    model.params().flat(i) = w - h;
    const double down = f(model);
    model.params().flat(i) = w;
    g.flat(i) = (up - down) / (2.0 * h);
  }
  return g;
}

inline double gelu(double x) { return 0.5 * x * (1.0 + std::tanh(std::sqrt(2.0 / M_PI) * (x + 0.044715 * x * x * x))); }
inline double gelu_prime(double x) {
  const double k = std::sqrt(2.0 / M_PI);
  const double u = k * (x + 0.044715 * x * x * x);
  const double t = std::tanh(u);
  return 0.5 * (1.0 + t) + 0.5 * x * (1.0 - t * t) * k * (1.0 + 3.0 * 0.044715 * x * x);
}

/// Gradient of log p(target | context) for a single window, by a
/// straightforward per-parameter backward pass. Flat order matches the
/// model's tensors.
inline std::vector<double> window_log_prob_grad(const unlearn_lens::TinyLM& model,
                                                std::span<const unlearn_lens::Token> ctx, unlearn_lens::Token y) {
  const auto& cfg = model.config();
  const auto& p = model.params().tensors;
  const std::size_t E = cfg.embed_dim;
  const std::size_t L = cfg.hidden.size();
  std::vector<std::vector<double>> acts;  // layer inputs
  std::vector<std::vector<double>> pre;
  std::vector<double> x(ctx.size() * E);
  for (std::size_t k = 0; k < ctx.size(); ++k)
    for (std::size_t e = 0; e < E; ++e) x[k * E + e] = p[0](ctx[k], e);
  acts.push_back(x);
  for (std::size_t l = 0; l < L; ++l) {
    const Matrix& w = p[1 + 2 * l];
    const Matrix& b = p[2 + 2 * l];
    std::vector<double> z(w.rows());
    std::vector<double> a(w.rows());
    for (std::size_t o = 0; o < w.rows(); ++o) {
      z[o] = b(0, o);
      for (std::size_t j = 0; j < w.cols(); ++j) z[o] += w(o, j) * acts.back()[j];
      a[o] = gelu(z[o]);
    }
    pre.push_back(z);
    acts.push_back(a);
  }
  const Matrix& wo = p[1 + 2 * L];
  const Matrix& bo = p[2 + 2 * L];
  std::vector<double> logits(wo.rows());
  for (std::size_t o = 0; o < wo.rows(); ++o) {
    logits[o] = bo(0, o);
    for (std::size_t j = 0; j < wo.cols(); ++j) logits[o] += wo(o, j) * acts.back()[j];
  }
  const double mx = *std::max_element(logits.begin(), logits.end());
  double s = 0.0;
  for (double z : logits) s += std::exp(z - mx);
  std::vector<double> delta(logits.size());  // d log p_y / d logits
  for (std::size_t o = 0; o < logits.size(); ++o)
    delta[o] = (o == y ? 1.0 : 0.0) - std::exp(logits[o] - mx) / s;

  std::vector<Matrix> grads;
  for (const auto& t : p) grads.emplace_back(t.rows(), t.cols());
  auto back = [&](std::size_t wi, const std::vector<double>& d, const std::vector<double>& in) {
    const Matrix& w = p[wi];
    std::vector<double> din(w.cols(), 0.0);
    for (std::size_t o = 0; o < w.rows(); ++o) {
      grads[wi + 1](0, o) += d[o];
      for (std::size_t j = 0; j < w.cols(); ++j) {
        grads[wi](o, j) += d[o] * in[j];
        din[j] += w(o, j) * d[o];
      }
    }
    return din;
  };
  std::vector<double> d = back(1 + 2 * L, delta, acts[L]);
  for (std::size_t l = L; l-- > 0;) {
    for (std::size_t o = 0; o < d.size(); ++o) d[o] *= gelu_prime(pre[l][o]);
    d = back(1 + 2 * l, d, acts[l]);
  }
  for (std::size_t k = 0; k < ctx.size(); ++k)
    for (std::size_t e = 0; e < E; ++e) grads[0](ctx[k], e) += d[k * E + e];

  std::vector<double> flat;
  for (const auto& g : grads) flat.insert(flat.end(), g.values().begin(), g.values().end());
  return flat;
}

/// Per-parameter loop: mean over windows of the squared log-prob gradient,
/// accumulated in long double.
inline std::vector<double> fisher_diagonal(const unlearn_lens::TinyLM& model, const unlearn_lens::Batch& batch) {
  std::vector<long double> acc(model.parameter_count(), 0.0L);
  for (std::size_t w = 0; w < batch.size(); ++w) {
    const auto g = window_log_prob_grad(model, batch.context(w), batch.targets[w]);
    for (std::size_t i = 0; i < g.size(); ++i) acc[i] += static_cast<long double>(g[i]) * g[i];
  }
  std::vector<double> out(acc.size());
  for (std::size_t i = 0; i < acc.size(); ++i) out[i] = static_cast<double>(acc[i] / batch.size());
  return out;
}

inline double relative_error(double a, double b) {
  const double scale = std::max(std::abs(a), std::abs(b));
  return scale == 0.0 ? 0.0 : std::abs(a - b) / scale;
}

}  // namespace oracle
