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

#include "unlearn_lens/linalg.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

#include <Eigen/Eigenvalues>


namespace unlearn_lens {

Matrix::Matrix(std::size_t rows, std::size_t cols) : rows_(rows), cols_(cols), data_(rows * cols, 0.0) {}

Matrix::Matrix(std::size_t rows, std::size_t cols, std::vector<double> data)
    : rows_(rows), cols_(cols), data_(std::move(data)) {
  if (data_.size() != rows_ * cols_) {
    throw ValidationError("matrix data length " + std::to_string(data_.size()) + " does not match shape " +
                          std::to_string(rows_) + "x" + std::to_string(cols_));
  }
  if (!all_finite()) throw ValidationError("matrix contains non-finite entries");
}

Matrix Matrix::from_rows(std::initializer_list<std::initializer_list<double>> rows) {
  const std::size_t r = rows.size();
  const std::size_t c = r == 0 ? 0 : rows.begin()->size();
  std::vector<double> data;
  data.reserve(r * c);
  for (const auto& row : rows) {
    if (row.size() != c) throw ValidationError("ragged matrix literal");
    data.insert(data.end(), row.begin(), row.end());
  }
  return {r, c, std::move(data)};
}

Matrix Matrix::identity(std::size_t n) {
  Matrix m(n, n);
  for (std::size_t i = 0; i < n; ++i) m(i, i) = 1.0;
  return m;
}

bool Matrix::all_finite() const noexcept {
  return std::all_of(data_.begin(), data_.end(), [](double v) { return std::isfinite(v); });
}

std::vector<double> column_means(const Matrix& m) {
  if (m.rows() == 0) throw ValidationError("empty input");
  std::vector<double> mean(m.cols(), 0.0);
  for (std::size_t r = 0; r < m.rows(); ++r) {
    const auto row = m.row(r);
    for (std::size_t c = 0; c < m.cols(); ++c) mean[c] += row[c];
  }
  const double inv = 1.0 / static_cast<double>(m.rows());
  for (double& v : mean) v *= inv;
  return mean;
}

Matrix center_columns(const Matrix& m) {
  const auto mean = column_means(m);
  Matrix out = m;
  for (std::size_t r = 0; r < out.rows(); ++r) {
    auto row = out.row(r);
    for (std::size_t c = 0; c < out.cols(); ++c) row[c] -= mean[c];
  }
  return out;
}

Matrix transpose(const Matrix& m) {
  Matrix t(m.cols(), m.rows());
  for (std::size_t r = 0; r < m.rows(); ++r)
    for (std::size_t c = 0; c < m.cols(); ++c) t(c, r) = m(r, c);
  return t;
}

Matrix matmul(const Matrix& a, const Matrix& b) {
  if (a.cols() != b.rows()) throw ValidationError("matmul shape mismatch");
  Matrix out(a.rows(), b.cols());
  for (std::size_t i = 0; i < a.rows(); ++i) {
    auto orow = out.row(i);
    for (std::size_t k = 0; k < a.cols(); ++k) {
      const double aik = a(i, k);
      if (aik == 0.0) continue;
      const auto brow = b.row(k);
      for (std::size_t j = 0; j < b.cols(); ++j) orow[j] += aik * brow[j];
    }
  }
  return out;
}

Matrix gram(const Matrix& m) {
  Matrix g(m.rows(), m.rows());
  for (std::size_t i = 0; i < m.rows(); ++i) {
    for (std::size_t j = 0; j <= i; ++j) {
      const double v = dot(m.row(i), m.row(j));
      g(i, j) = v;
      g(j, i) = v;
    }
  }
  return g;
}

Matrix covariance(const Matrix& centered) {
  if (centered.rows() < 2) throw ValidationError("covariance needs at least two rows");
  const std::size_t d = centered.cols();
  Matrix cov(d, d);
  for (std::size_t r = 0; r < centered.rows(); ++r) {
    const auto row = centered.row(r);
    for (std::size_t i = 0; i < d; ++i) {
      const double xi = row[i];
      auto crow = cov.row(i);
      for (std::size_t j = 0; j <= i; ++j) crow[j] += xi * row[j];
    }
  }
  const double inv = 1.0 / static_cast<double>(centered.rows() - 1);
  for (std::size_t i = 0; i < d; ++i) {
    for (std::size_t j = 0; j <= i; ++j) {
      cov(i, j) *= inv;
      cov(j, i) = cov(i, j);
    }
  }
  return cov;
}

double frobenius_norm(const Matrix& m) { return norm2(m.values()); }

double dot(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) throw ValidationError("dot length mismatch");
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

double norm2(std::span<const double> a) {
  double s = 0.0;
  for (double v : a) s += v * v;
  return std::sqrt(s);
}

double cosine(std::span<const double> a, std::span<const double> b) {
  if (a.empty() || a.size() != b.size()) throw ValidationError("cosine needs equal nonzero lengths");
  const double na = dot(a, a);
  const double nb = dot(b, b);
  if (na == 0.0 || nb == 0.0) throw ValidationError("degenerate direction");
  // sqrt(na * nb) rather than sqrt(na) * sqrt(nb): cosine(a, a) is then exactly 1.
  const double c = dot(a, b) / std::sqrt(na * nb);
  return std::clamp(c, -1.0, 1.0);
}

void canonicalize_sign(std::span<double> v) noexcept {
  for (double x : v) {
    if (std::abs(x) > 1e-12) {
      if (x < 0.0) {
        for (double& y : v) y = -y;
      }
      return;
    }
  }
}

namespace {

double residual_norm(const Matrix& s, std::span<const double> v, double lambda) {
  double r = 0.0;
  for (std::size_t i = 0; i < s.rows(); ++i) {
    const double d = dot(s.row(i), v) - lambda * v[i];
    r += d * d;
  }
  return std::sqrt(r);
}

}  // namespace

TopEigen sym_top_eigs(const Matrix& s, std::size_t k, double tol) {
  const std::size_t n = s.rows();
  if (n == 0 || s.cols() != n) throw ValidationError("sym_top_eigs needs a nonempty square matrix");
  if (k > n) throw ValidationError("sym_top_eigs: k exceeds dimension");
  if (!(tol > 0.0)) throw ValidationError("sym_top_eigs: tol must be positive");

  double scale = 0.0;
  for (double v : s.values()) scale = std::max(scale, std::abs(v));
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < i; ++j)
      if (std::abs(s(i, j) - s(j, i)) > 1e-9 * std::max(1.0, scale))
        throw ValidationError("sym_top_eigs: matrix is not symmetric");

  // Householder tridiagonalization + implicit QR; only the lower triangle is read.
  Eigen::MatrixXd a(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(n));
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j) a(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = s(i, j);
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> solver;
  solver.compute(a, Eigen::ComputeEigenvectors);
  if (solver.info() != Eigen::Success)
    throw EigenConvergenceError("sym_top_eigs: QR iteration did not converge",
                                std::numeric_limits<double>::infinity());

  // Eigen returns ascending order.
  const auto& values = solver.eigenvalues();
  const auto& vectors = solver.eigenvectors();
  TopEigen result;
  for (std::size_t idx = 0; idx < k; ++idx) {
    const auto col = static_cast<Eigen::Index>(n - 1 - idx);
    EigenPair p;
    p.vector.resize(n);
    for (std::size_t i = 0; i < n; ++i) p.vector[i] = vectors(static_cast<Eigen::Index>(i), col);
    const double nv = norm2(p.vector);
    for (double& x : p.vector) x /= nv;
    canonicalize_sign(p.vector);
    // Rayleigh quotient of the normalized vector.
    double rq = 0.0;
    for (std::size_t i = 0; i < n; ++i) rq += p.vector[i] * dot(s.row(i), p.vector);
    p.value = rq;
    const double r = residual_norm(s, p.vector, p.value);
    if (!(r <= tol * std::max(1.0, std::abs(p.value))))
      throw EigenConvergenceError("sym_top_eigs: residual " + std::to_string(r) + " above tolerance for pair " +
                                      std::to_string(idx),
                                  r);
    result.pairs.push_back(std::move(p));
  }
  if (n >= 2) {
    const double l1 = values(static_cast<Eigen::Index>(n - 1));
    const double l2 = values(static_cast<Eigen::Index>(n - 2));
    result.degenerate_gap = (l1 - l2) < 1e-10 * std::abs(l1) || l1 == l2;
  }
  return result;
}

double sym_spectral_norm(const Matrix& s, double tol) {
  const auto top = sym_top_eigs(s, 1, tol);
  Matrix neg = s;
  for (double& v : neg.values()) v = -v;
  const auto bottom = sym_top_eigs(neg, 1, tol);
  return std::max(std::abs(top.pairs[0].value), std::abs(bottom.pairs[0].value));
}

}  // namespace unlearn_lens
