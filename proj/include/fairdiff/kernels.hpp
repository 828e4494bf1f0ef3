// Copyright 2026 The fairdiff Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

// Dense double-precision inner loops used by the calibration solver, the
// attention block and the toy denoiser. A scalar reference implementation is
// always present; AVX2+FMA (x86-64) and NEON (AArch64) variants are compiled
// when the toolchain allows and selected at runtime.
//
// The active backend is chosen once, on first use: the FAIRDIFF_SIMD
// environment variable (`scalar`, `avx2`, `neon`, `auto`) wins, otherwise the
// widest supported variant is picked. SIMD variants reassociate sums, so
// results agree with the scalar path to rounding, not bit-for-bit. Within a
// process the backend is fixed unless set_backend() is called explicitly,
// which keeps every run on a given machine reproducible.

#include <cstddef>
#include <optional>
#include <span>
#include <string_view>

namespace fairdiff::kernels {

enum class Backend { scalar, avx2, neon };

struct KernelTable {
  double (*dot)(const double* a, const double* b, std::size_t n);
  // y += alpha * x
  void (*axpy)(double alpha, const double* x, double* y, std::size_t n);
  double (*squared_distance)(const double* a, const double* b, std::size_t n);
};

[[nodiscard]] bool backend_supported(Backend backend) noexcept;
[[nodiscard]] std::string_view backend_name(Backend backend) noexcept;
[[nodiscard]] std::optional<Backend> parse_backend(std::string_view name) noexcept;

[[nodiscard]] Backend active_backend() noexcept;
/// Throws fairdiff::Error(invalid_argument) if the backend is not available.
void set_backend(Backend backend);

/// Raw table for a specific backend; used by the equivalence tests.
[[nodiscard]] const KernelTable& table(Backend backend);

[[nodiscard]] double dot(std::span<const double> a, std::span<const double> b);
void axpy(double alpha, std::span<const double> x, std::span<double> y);
[[nodiscard]] double squared_distance(std::span<const double> a, std::span<const double> b);

/// y = A x with A row-major rows x cols.
void gemv(std::span<const double> a, std::size_t rows, std::size_t cols,
          std::span<const double> x, std::span<double> y);

/// y += A^T x with A row-major rows x cols (x has `rows` entries, y has `cols`).
void gemv_transposed_acc(std::span<const double> a, std::size_t rows, std::size_t cols,
                         std::span<const double> x, std::span<double> y);

/// A += alpha * x y^T with A row-major |x| x |y|.
void rank1_update(double alpha, std::span<const double> x, std::span<const double> y,
                  std::span<double> a);

}  // namespace fairdiff::kernels
