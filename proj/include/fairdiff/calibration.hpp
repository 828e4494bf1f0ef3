// Copyright 2026 The fairdiff Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

// Closed-form embedding calibration.
//
// Given prompt pairs (z_i, z_j) that describe the same class with different
// spurious attributes, the calibration matrix is
//
//     C = (I + (lambda / |S|) * sum_k d_k d_k^T)^-1,   d_k = z_i - z_j,
//
// the minimiser of ||P - P0||^2 + (lambda/|S|) sum ||P z_i - P z_j||^2 with
// P0 = I. Embeddings arrive already encoded, so the pre-trained encoding P0
// acts as the identity on embedding space and the calibrated embedding of z
// is simply C z.
//
// C is built from a Cholesky factorisation of the regularised Gram matrix and
// one triangular solve pair per column; no explicit inverse is formed.
//
// CMAT layout: "CMAT", u32 version = 1, u32 dim d, f64 lambda, then d*d f64
// values row-major, all little-endian.

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "fairdiff/embedding.hpp"
#include "fairdiff/matrix.hpp"

namespace fairdiff {

class PromptPairSet {
 public:
  using Pair = std::pair<EmbeddingVector, EmbeddingVector>;

  PromptPairSet(std::size_t dim, std::vector<Pair> pairs);

  /// Consecutive rows (0,1), (2,3), ... of an EMBD set form the pairs. An odd
  /// row count is rejected.
  static PromptPairSet from_rows(const EmbeddingSet& rows);

  [[nodiscard]] std::size_t dim() const noexcept { return dim_; }
  [[nodiscard]] std::size_t size() const noexcept { return pairs_.size(); }
  [[nodiscard]] const std::vector<Pair>& pairs() const noexcept { return pairs_; }

  /// d_k = z_i - z_j, unnormalised.
  [[nodiscard]] std::vector<double> difference(std::size_t k) const;

 private:
  std::size_t dim_;
  std::vector<Pair> pairs_;
};

class CalibrationMatrix {
 public:
  /// Validates symmetry (relative Frobenius 1e-9) and that the spectrum lies
  /// in (0, 1].
  CalibrationMatrix(Matrix m, double lambda);

  [[nodiscard]] std::size_t dim() const noexcept { return m_.rows(); }
  [[nodiscard]] const Matrix& matrix() const noexcept { return m_; }
  [[nodiscard]] double lambda() const noexcept { return lambda_; }

 private:
  Matrix m_;
  double lambda_;
};

/// I + (lambda/|S|) sum d d^T.
[[nodiscard]] Matrix regularized_gram(const PromptPairSet& pairs, double lambda);

[[nodiscard]] CalibrationMatrix build_calibration(const PromptPairSet& pairs, double lambda);

[[nodiscard]] std::vector<double> project(const CalibrationMatrix& c, std::span<const double> z);
[[nodiscard]] EmbeddingVector project(const CalibrationMatrix& c, const EmbeddingVector& z);

inline constexpr std::uint32_t kCmatVersion = 1;

[[nodiscard]] std::string encode_calibration(const CalibrationMatrix& c);
[[nodiscard]] CalibrationMatrix decode_calibration(std::string_view bytes);
[[nodiscard]] CalibrationMatrix load_calibration(const std::filesystem::path& path);
void save_calibration(const CalibrationMatrix& c, const std::filesystem::path& path);

}  // namespace fairdiff
