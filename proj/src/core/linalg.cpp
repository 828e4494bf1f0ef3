// Copyright 2026 The fairdiff Authors
// SPDX-License-Identifier: Apache-2.0

#include "fairdiff/linalg.hpp"

#include <cmath>

#include "fairdiff/error.hpp"
#include "fairdiff/kernels.hpp"

namespace fairdiff {

std::optional<Matrix> cholesky(const Matrix& a) {
  require(a.rows() == a.cols(), Errc::dimension_mismatch, "cholesky needs a square matrix");
  const std::size_t n = a.rows();
  Matrix l(n, n);
  for (std::size_t j = 0; j < n; ++j) {
    // Row prefixes L(j, 0..j) and L(i, 0..j) are contiguous in row-major storage.
    const auto lj = l.row(j).first(j);
    const double pivot = a(j, j) - kernels::dot(lj, lj);
    if (!(pivot > 0.0) || !std::isfinite(pivot)) return std::nullopt;
    const double diag = std::sqrt(pivot);
    l(j, j) = diag;
    for (std::size_t i = j + 1; i < n; ++i) {
      l(i, j) = (a(i, j) - kernels::dot(l.row(i).first(j), lj)) / diag;
    }
  }
  return l;
}

std::vector<double> cholesky_solve(const Matrix& lower, std::span<const double> b) {
  const std::size_t n = lower.rows();
  require(b.size() == n, Errc::dimension_mismatch, "cholesky_solve: right-hand side length");
  // Forward: L y = b.
  std::vector<double> y(b.begin(), b.end());
  for (std::size_t i = 0; i < n; ++i) {
    y[i] = (y[i] - kernels::dot(lower.row(i).first(i), std::span<const double>(y).first(i))) /
           lower(i, i);
  }
  // Backward: L^T x = y. Column i of L^T is row i of L.
  std::vector<double> x = std::move(y);
  for (std::size_t ii = n; ii-- > 0;) {
    x[ii] /= lower(ii, ii);
    if (x[ii] != 0.0) {
      kernels::axpy(-x[ii], lower.row(ii).first(ii), std::span<double>(x).first(ii));
    }
  }
  return x;
}

}  // namespace fairdiff
