// Copyright 2026 The fairdiff Authors
// SPDX-License-Identifier: Apache-2.0

#include <gtest/gtest.h>

#include <cmath>
#include <random>
#include <vector>

#include "fairdiff/error.hpp"
#include "fairdiff/kernels.hpp"
#include "test_util.hpp"

namespace fairdiff {
namespace {

using kernels::Backend;

std::vector<Backend> simd_backends() {
  std::vector<Backend> out;
  for (Backend b : {Backend::avx2, Backend::neon})
    if (kernels::backend_supported(b)) out.push_back(b);
  return out;
}

// Restores the process-wide backend after a test switches it.
class BackendGuard {
 public:
  BackendGuard() : saved_(kernels::active_backend()) {}
  ~BackendGuard() { kernels::set_backend(saved_); }

 private:
  Backend saved_;
};

TEST(Kernels, ScalarAlwaysSupported) {
  EXPECT_TRUE(kernels::backend_supported(Backend::scalar));
  EXPECT_EQ(kernels::parse_backend("scalar"), Backend::scalar);
  EXPECT_EQ(kernels::parse_backend("avx2"), Backend::avx2);
  EXPECT_EQ(kernels::parse_backend("neon"), Backend::neon);
  EXPECT_FALSE(kernels::parse_backend("sse9").has_value());
  EXPECT_EQ(kernels::backend_name(Backend::scalar), "scalar");
}

TEST(Kernels, UnsupportedBackendIsRejected) {
  for (Backend b : {Backend::avx2, Backend::neon}) {
    if (!kernels::backend_supported(b)) {
      EXPECT_THROW(kernels::set_backend(b), Error);
    }
  }
}

TEST(Kernels, ScalarReferenceValues) {
  const auto& t = kernels::table(Backend::scalar);
  const double a[] = {1, 2, 3, 4, 5};
  const double b[] = {5, 4, 3, 2, 1};
  EXPECT_EQ(t.dot(a, b, 5), 35.0);
  EXPECT_EQ(t.squared_distance(a, b, 5), 16 + 4 + 0 + 4 + 16);
  double y[] = {1, 1, 1, 1, 1};
  t.axpy(2.0, a, y, 5);
  EXPECT_EQ(y[4], 11.0);
  EXPECT_EQ(t.dot(a, b, 0), 0.0);
}

// Every SIMD variant must agree with the scalar reference on every length,
// including the tails that do not fill a vector register.
TEST(Kernels, SimdMatchesScalarAcrossLengths) {
  const auto& ref = kernels::table(Backend::scalar);
  std::mt19937_64 rng(20260101);
  for (Backend backend : simd_backends()) {
    SCOPED_TRACE(std::string(kernels::backend_name(backend)));
    const auto& simd = kernels::table(backend);
    for (std::size_t n = 0; n <= 67; ++n) {
      const auto a = testing::random_vector(rng, n);
      const auto b = testing::random_vector(rng, n);
      double mag = 0.0;
      for (std::size_t i = 0; i < n; ++i) mag += std::abs(a[i] * b[i]);
      EXPECT_NEAR(simd.dot(a.data(), b.data(), n), ref.dot(a.data(), b.data(), n),
                  1e-14 * (mag + 1.0));
      EXPECT_NEAR(simd.squared_distance(a.data(), b.data(), n),
                  ref.squared_distance(a.data(), b.data(), n), 1e-13 * (n + 1.0));
      auto y1 = b, y2 = b;
      ref.axpy(-0.75, a.data(), y1.data(), n);
      simd.axpy(-0.75, a.data(), y2.data(), n);
      for (std::size_t i = 0; i < n; ++i) EXPECT_NEAR(y1[i], y2[i], 1e-15 * (1 + std::abs(y1[i])));
    }
  }
  if (simd_backends().empty()) GTEST_SKIP() << "no SIMD backend on this machine";
}

TEST(Kernels, MatrixHelpersAgreeAcrossBackends) {
  BackendGuard guard;
  std::mt19937_64 rng(7);
  const std::size_t rows = 9, cols = 13;
  const auto a = testing::random_vector(rng, rows * cols);
  const auto x = testing::random_vector(rng, cols);
  const auto xr = testing::random_vector(rng, rows);

  kernels::set_backend(Backend::scalar);
  std::vector<double> y_ref(rows), yt_ref(cols, 0.5), r_ref = a;
  kernels::gemv(a, rows, cols, x, y_ref);
  kernels::gemv_transposed_acc(a, rows, cols, xr, yt_ref);
  kernels::rank1_update(0.3, xr, x, r_ref);

  // Direct loops as the oracle for the scalar path.
  for (std::size_t i = 0; i < rows; ++i) {
    double s = 0.0;
    for (std::size_t j = 0; j < cols; ++j) s += a[i * cols + j] * x[j];
    EXPECT_NEAR(y_ref[i], s, 1e-13);
  }
  for (std::size_t j = 0; j < cols; ++j) {
    double s = 0.5;
    for (std::size_t i = 0; i < rows; ++i) s += a[i * cols + j] * xr[i];
    EXPECT_NEAR(yt_ref[j], s, 1e-13);
  }
  for (std::size_t i = 0; i < rows; ++i)
    for (std::size_t j = 0; j < cols; ++j)
      EXPECT_NEAR(r_ref[i * cols + j], a[i * cols + j] + 0.3 * xr[i] * x[j], 1e-15);

  for (Backend backend : simd_backends()) {
    kernels::set_backend(backend);
    EXPECT_EQ(kernels::active_backend(), backend);
    std::vector<double> y(rows), yt(cols, 0.5), r = a;
    kernels::gemv(a, rows, cols, x, y);
    kernels::gemv_transposed_acc(a, rows, cols, xr, yt);
    kernels::rank1_update(0.3, xr, x, r);
    for (std::size_t i = 0; i < rows; ++i) EXPECT_NEAR(y[i], y_ref[i], 1e-13);
    for (std::size_t j = 0; j < cols; ++j) EXPECT_NEAR(yt[j], yt_ref[j], 1e-13);
    for (std::size_t i = 0; i < r.size(); ++i) EXPECT_NEAR(r[i], r_ref[i], 1e-14);
  }
}

TEST(Kernels, LengthMismatchThrows) {
  std::vector<double> a(3), b(4);
  EXPECT_THROW((void)kernels::dot(a, b), Error);
  EXPECT_THROW(kernels::axpy(1.0, a, b), Error);
  std::vector<double> y(2);
  EXPECT_THROW(kernels::gemv(a, 2, 2, b, y), Error);
}

}  // namespace
}  // namespace fairdiff
