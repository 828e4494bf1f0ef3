// Copyright 2026 The fairdiff Authors
// SPDX-License-Identifier: Apache-2.0

#include "fairdiff/matrix.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "fairdiff/error.hpp"
#include "fairdiff/kernels.hpp"

namespace fairdiff {

Matrix transpose(const Matrix& m) {
  Matrix t(m.cols(), m.rows());
  for (std::size_t r = 0; r < m.rows(); ++r)
    for (std::size_t c = 0; c < m.cols(); ++c) t(c, r) = m(r, c);
  return t;
}

Matrix matmul(const Matrix& a, const Matrix& b) {
  require(a.cols() == b.rows(), Errc::dimension_mismatch,
          "matmul: " + std::to_string(a.cols()) + " vs " + std::to_string(b.rows()));
  Matrix out(a.rows(), b.cols());
  for (std::size_t r = 0; r < a.rows(); ++r) {
    // row_r(out) = sum_k a(r,k) * row_k(b)
    for (std::size_t k = 0; k < a.cols(); ++k) {
      if (a(r, k) != 0.0) kernels::axpy(a(r, k), b.row(k), out.row(r));
    }
  }
  return out;
}

double frobenius_norm(const Matrix& m) { return std::sqrt(kernels::dot(m.values(), m.values())); }

bool all_finite(std::span<const double> values) noexcept {
  return std::all_of(values.begin(), values.end(), [](double v) { return std::isfinite(v); });
}

}  // namespace fairdiff
