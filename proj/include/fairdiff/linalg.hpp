// Copyright 2026 The fairdiff Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <optional>
#include <span>
#include <vector>

#include "fairdiff/matrix.hpp"

namespace fairdiff {

/// Lower-triangular Cholesky factor L with A = L L^T, or nullopt when A is
/// not (numerically) positive definite. Only the lower triangle of A is read.
[[nodiscard]] std::optional<Matrix> cholesky(const Matrix& a);

/// Solves (L L^T) x = b given the factor from cholesky().
[[nodiscard]] std::vector<double> cholesky_solve(const Matrix& lower, std::span<const double> b);

}  // namespace fairdiff
