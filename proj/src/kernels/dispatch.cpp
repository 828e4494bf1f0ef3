// Copyright 2026 The fairdiff Authors
// SPDX-License-Identifier: Apache-2.0

#include <atomic>
#include <cstdlib>
#include <string>

#include "fairdiff/error.hpp"
#include "kernels_internal.hpp"

namespace fairdiff::kernels {
namespace {

bool cpu_has_avx2() noexcept {
#if defined(FAIRDIFF_HAVE_AVX2) && (defined(__GNUC__) || defined(__clang__))
  return __builtin_cpu_supports("avx2") && __builtin_cpu_supports("fma");
#else
  return false;
#endif
}

Backend widest_supported() noexcept {
  if (backend_supported(Backend::avx2)) return Backend::avx2;
  if (backend_supported(Backend::neon)) return Backend::neon;
  return Backend::scalar;
}

Backend initial_backend() noexcept {
  if (const char* env = std::getenv("FAIRDIFF_SIMD")) {
    if (auto parsed = parse_backend(env); parsed && backend_supported(*parsed)) return *parsed;
  }
  return widest_supported();
}

struct State {
  std::atomic<Backend> backend{initial_backend()};
  std::atomic<const KernelTable*> current{nullptr};

  State() { current.store(&table(backend.load())); }
};

State& state() {
  static State s;
  return s;
}

inline const KernelTable& active() { return *state().current.load(std::memory_order_relaxed); }

void check_same(std::size_t a, std::size_t b, const char* what) {
  if (a != b) {
    fail(Errc::dimension_mismatch,
         std::string(what) + ": length " + std::to_string(a) + " vs " + std::to_string(b));
  }
}

}  // namespace

bool backend_supported(Backend backend) noexcept {
  switch (backend) {
    case Backend::scalar:
      return true;
    case Backend::avx2:
      return cpu_has_avx2();
    case Backend::neon:
#if defined(FAIRDIFF_HAVE_NEON)
      return true;
#else
      return false;
#endif
  }
  return false;
}

std::string_view backend_name(Backend backend) noexcept {
  switch (backend) {
    case Backend::scalar:
      return "scalar";
    case Backend::avx2:
      return "avx2";
    case Backend::neon:
      return "neon";
  }
  return "unknown";
}

std::optional<Backend> parse_backend(std::string_view name) noexcept {
  if (name == "scalar") return Backend::scalar;
  if (name == "avx2") return Backend::avx2;
  if (name == "neon") return Backend::neon;
  if (name == "auto") return widest_supported();
  return std::nullopt;
}

Backend active_backend() noexcept { return state().backend.load(); }

void set_backend(Backend backend) {
  require(backend_supported(backend), Errc::invalid_argument,
          "kernel backend '" + std::string(backend_name(backend)) + "' is not available");
  state().current.store(&table(backend));
  state().backend.store(backend);
}

const KernelTable& table(Backend backend) {
  switch (backend) {
    case Backend::scalar:
      return detail::scalar_table();
    case Backend::avx2:
#if defined(FAIRDIFF_HAVE_AVX2)
      if (cpu_has_avx2()) return detail::avx2_table();
#endif
      break;
    case Backend::neon:
#if defined(FAIRDIFF_HAVE_NEON)
      return detail::neon_table();
#endif
      break;
  }
  fail(Errc::invalid_argument,
       "kernel backend '" + std::string(backend_name(backend)) + "' is not available");
}

double dot(std::span<const double> a, std::span<const double> b) {
  check_same(a.size(), b.size(), "dot");
  return active().dot(a.data(), b.data(), a.size());
}

void axpy(double alpha, std::span<const double> x, std::span<double> y) {
  check_same(x.size(), y.size(), "axpy");
  active().axpy(alpha, x.data(), y.data(), x.size());
}

double squared_distance(std::span<const double> a, std::span<const double> b) {
  check_same(a.size(), b.size(), "squared_distance");
  return active().squared_distance(a.data(), b.data(), a.size());
}

void gemv(std::span<const double> a, std::size_t rows, std::size_t cols,
          std::span<const double> x, std::span<double> y) {
  check_same(a.size(), rows * cols, "gemv matrix");
  check_same(x.size(), cols, "gemv input");
  check_same(y.size(), rows, "gemv output");
  const KernelTable& k = active();
  for (std::size_t r = 0; r < rows; ++r) y[r] = k.dot(a.data() + r * cols, x.data(), cols);
}

void gemv_transposed_acc(std::span<const double> a, std::size_t rows, std::size_t cols,
                         std::span<const double> x, std::span<double> y) {
  check_same(a.size(), rows * cols, "gemv_transposed_acc matrix");
  check_same(x.size(), rows, "gemv_transposed_acc input");
  check_same(y.size(), cols, "gemv_transposed_acc output");
  const KernelTable& k = active();
  for (std::size_t r = 0; r < rows; ++r) {
    if (x[r] != 0.0) k.axpy(x[r], a.data() + r * cols, y.data(), cols);
  }
}

void rank1_update(double alpha, std::span<const double> x, std::span<const double> y,
                  std::span<double> a) {
  check_same(a.size(), x.size() * y.size(), "rank1_update");
  const KernelTable& k = active();
  const std::size_t cols = y.size();
  for (std::size_t r = 0; r < x.size(); ++r) {
    const double coeff = alpha * x[r];
    if (coeff != 0.0) k.axpy(coeff, y.data(), a.data() + r * cols, cols);
  }
}

}  // namespace fairdiff::kernels
