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

#include <cstddef>
#include <initializer_list>
#include <span>
#include <vector>

#include "unlearn_lens/error.hpp"

namespace unlearn_lens {

/// Dense row-major matrix of doubles. Entries are checked for finiteness
/// when a matrix is built from caller-supplied data.
class Matrix {
 public:
  Matrix() = default;
  Matrix(std::size_t rows, std::size_t cols);
  Matrix(std::size_t rows, std::size_t cols, std::vector<double> data);

  static Matrix from_rows(std::initializer_list<std::initializer_list<double>> rows);
  static Matrix identity(std::size_t n);

  [[nodiscard]] std::size_t rows() const noexcept { return rows_; }
  [[nodiscard]] std::size_t cols() const noexcept { return cols_; }
  [[nodiscard]] std::size_t size() const noexcept { return data_.size(); }
  [[nodiscard]] bool empty() const noexcept { return data_.empty(); }

  double& operator()(std::size_t r, std::size_t c) noexcept { return data_[r * cols_ + c]; }
  double operator()(std::size_t r, std::size_t c) const noexcept { return data_[r * cols_ + c]; }

  std::span<double> row(std::size_t r) noexcept { return {data_.data() + r * cols_, cols_}; }
  [[nodiscard]] std::span<const double> row(std::size_t r) const noexcept {
    return {data_.data() + r * cols_, cols_};
  }

  std::span<double> values() noexcept { return data_; }
  [[nodiscard]] std::span<const double> values() const noexcept { return data_; }

  [[nodiscard]] bool all_finite() const noexcept;

  friend bool operator==(const Matrix&, const Matrix&) = default;

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<double> data_;
};

struct EigenPair {
  double value = 0.0;
  std::vector<double> vector;
};

/// Result of a top-k symmetric eigensolve. `degenerate_gap` is set when the
/// two leading eigenvalues coincide to within 1e-10 relative, in which case
/// the leading direction is not well defined.
struct TopEigen {
  std::vector<EigenPair> pairs;
  bool degenerate_gap = false;
};

class EigenConvergenceError : public NumericalError {
 public:
  EigenConvergenceError(const std::string& what, double best_residual)
      : NumericalError(what), best_residual_(best_residual) {}
  [[nodiscard]] double best_residual() const noexcept { return best_residual_; }

 private:
  double best_residual_;
};

/// Subtracts each column's mean. Throws "empty input" on a matrix without rows.
Matrix center_columns(const Matrix& m);
std::vector<double> column_means(const Matrix& m);

Matrix transpose(const Matrix& m);
Matrix matmul(const Matrix& a, const Matrix& b);
/// m * m^T.
Matrix gram(const Matrix& m);
/// Sample covariance X^T X / (rows - 1) of an already centered matrix.
Matrix covariance(const Matrix& centered);

double frobenius_norm(const Matrix& m);
double dot(std::span<const double> a, std::span<const double> b);
double norm2(std::span<const double> a);
/// Cosine of the angle between a and b; throws "degenerate direction" on a
/// zero vector. Result is clamped to [-1, 1].
double cosine(std::span<const double> a, std::span<const double> b);

/// Top-k eigenpairs of a symmetric matrix (dense tridiagonal QR, capped at
/// 30 sweeps per eigenvalue). Pairs come back sorted by descending
/// eigenvalue, mutually orthogonal, each with residual
/// ||s v - lambda v|| <= tol * max(1, |lambda|) or EigenConvergenceError is
/// thrown, and sign-canonicalized so the first coordinate with magnitude
/// above 1e-12 is positive.
TopEigen sym_top_eigs(const Matrix& s, std::size_t k, double tol = 1e-10);

/// Largest |eigenvalue| of a symmetric matrix.
double sym_spectral_norm(const Matrix& s, double tol = 1e-12);

/// Flips v so that its first significant coordinate is positive.
void canonicalize_sign(std::span<double> v) noexcept;

}  // namespace unlearn_lens
