// Copyright 2026 The fairdiff Authors
// SPDX-License-Identifier: Apache-2.0

#include "fairdiff/calibration.hpp"

#include <cmath>

#include "binary_io.hpp"
#include "fairdiff/error.hpp"
#include "fairdiff/kernels.hpp"
#include "fairdiff/linalg.hpp"

namespace fairdiff {

PromptPairSet::PromptPairSet(std::size_t dim, std::vector<Pair> pairs)
    : dim_(dim), pairs_(std::move(pairs)) {
  require(!pairs_.empty(), Errc::invalid_argument, "prompt pair set is empty");
  for (const auto& [a, b] : pairs_) {
    require(a.dim() == dim_ && b.dim() == dim_, Errc::dimension_mismatch,
            "prompt pair vectors must have length " + std::to_string(dim_));
  }
}

PromptPairSet PromptPairSet::from_rows(const EmbeddingSet& rows) {
  require(rows.size() % 2 == 0, Errc::invalid_argument,
          "pair file has an odd row count (" + std::to_string(rows.size()) + ")");
  std::vector<Pair> pairs;
  pairs.reserve(rows.size() / 2);
  for (std::size_t i = 0; i + 1 < rows.size(); i += 2) {
    pairs.emplace_back(rows.vector(i), rows.vector(i + 1));
  }
  return PromptPairSet(rows.dim(), std::move(pairs));
}

std::vector<double> PromptPairSet::difference(std::size_t k) const {
  const auto& [a, b] = pairs_.at(k);
  std::vector<double> d(dim_);
  for (std::size_t i = 0; i < dim_; ++i) d[i] = a[i] - b[i];
  return d;
}

CalibrationMatrix::CalibrationMatrix(Matrix m, double lambda) : m_(std::move(m)), lambda_(lambda) {
  require(m_.rows() == m_.cols() && m_.rows() >= 2, Errc::dimension_mismatch,
          "calibration matrix must be square with dim >= 2");
  require(std::isfinite(lambda_) && lambda_ >= 0.0, Errc::invalid_argument,
          "lambda must be finite and >= 0");
  require(all_finite(m_.values()), Errc::non_finite, "calibration matrix has non-finite entries");

  const std::size_t n = m_.rows();
  double asym = 0.0;
  for (std::size_t r = 0; r < n; ++r)
    for (std::size_t c = r + 1; c < n; ++c) asym += 2.0 * std::pow(m_(r, c) - m_(c, r), 2);
  require(std::sqrt(asym) <= 1e-9 * frobenius_norm(m_), Errc::invalid_argument,
          "calibration matrix is not symmetric");

  // Spectrum in (0, 1]: C positive definite and I - C positive semidefinite,
  // the latter probed with a relative slack for the exact-identity case.
  require(cholesky(m_).has_value(), Errc::invalid_argument,
          "calibration matrix is not positive definite");
  Matrix upper_gap(n, n);
  for (std::size_t r = 0; r < n; ++r)
    for (std::size_t c = 0; c < n; ++c) upper_gap(r, c) = (r == c ? 1.0 + 1e-9 : 0.0) - m_(r, c);
  require(cholesky(upper_gap).has_value(), Errc::invalid_argument,
          "calibration matrix has an eigenvalue above 1");
}

Matrix regularized_gram(const PromptPairSet& pairs, double lambda) {
  require(std::isfinite(lambda) && lambda >= 0.0, Errc::invalid_argument,
          "lambda must be finite and >= 0");
  const std::size_t n = pairs.dim();
  Matrix gram = Matrix::identity(n);
  const double weight = lambda / static_cast<double>(pairs.size());
  for (std::size_t k = 0; k < pairs.size(); ++k) {
    const auto d = pairs.difference(k);
    kernels::rank1_update(weight, d, d, gram.values());
  }
  require(all_finite(gram.values()), Errc::non_finite, "calibration Gram matrix overflowed");
  return gram;
}

CalibrationMatrix build_calibration(const PromptPairSet& pairs, double lambda) {
  const Matrix gram = regularized_gram(pairs, lambda);
  const std::size_t n = gram.rows();
  const auto factor = cholesky(gram);
  require(factor.has_value(), Errc::solver_failure,
          "regularized Gram matrix is not positive definite");

  Matrix c(n, n);
  std::vector<double> unit(n, 0.0);
  for (std::size_t j = 0; j < n; ++j) {
    unit[j] = 1.0;
    const auto column = cholesky_solve(*factor, unit);
    unit[j] = 0.0;
    for (std::size_t i = 0; i < n; ++i) c(i, j) = column[i];
  }
  // Column solves agree with the mirrored entries only to rounding.
  for (std::size_t r = 0; r < n; ++r) {
    for (std::size_t col = r + 1; col < n; ++col) {
      const double avg = 0.5 * (c(r, col) + c(col, r));
      c(r, col) = avg;
      c(col, r) = avg;
    }
  }
  return CalibrationMatrix(std::move(c), lambda);
}

std::vector<double> project(const CalibrationMatrix& c, std::span<const double> z) {
  require(z.size() == c.dim(), Errc::dimension_mismatch,
          "project: vector length " + std::to_string(z.size()) + ", calibration dim " +
              std::to_string(c.dim()));
  std::vector<double> out(c.dim());
  kernels::gemv(c.matrix().values(), c.dim(), c.dim(), z, out);
  return out;
}

EmbeddingVector project(const CalibrationMatrix& c, const EmbeddingVector& z) {
  return EmbeddingVector(project(c, z.values()));
}

std::string encode_calibration(const CalibrationMatrix& c) {
  detail::ByteWriter w;
  w.magic("CMAT");
  w.u32(kCmatVersion);
  w.u32(static_cast<std::uint32_t>(c.dim()));
  w.f64(c.lambda());
  for (double v : c.matrix().values()) w.f64(v);
  return w.take();
}

CalibrationMatrix decode_calibration(std::string_view bytes) {
  detail::ByteReader r(bytes, "CMAT");
  r.expect_magic("CMAT");
  const std::uint32_t version = r.u32();
  require(version == kCmatVersion, Errc::version_mismatch,
          "CMAT version " + std::to_string(version) + " (expected 1)");
  const std::uint32_t dim = r.u32();
  const double lambda = r.f64();
  r.need(static_cast<std::size_t>(dim) * dim * sizeof(double));
  Matrix m(dim, dim);
  for (auto& v : m.values()) v = r.f64();
  r.expect_end();
  return CalibrationMatrix(std::move(m), lambda);
}

CalibrationMatrix load_calibration(const std::filesystem::path& path) {
  return decode_calibration(read_file_bytes(path));
}

void save_calibration(const CalibrationMatrix& c, const std::filesystem::path& path) {
  write_file_bytes(path, encode_calibration(c));
}

}  // namespace fairdiff
