// Copyright 2026 The fairdiff Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace fairdiff {

/// Failure categories. The CLI maps `divergence` to exit code 3 and every
/// other category to exit code 2.
enum class Errc {
  io,
  bad_magic,
  version_mismatch,
  truncated,
  trailing_bytes,
  label_count_mismatch,
  duplicate_label,
  non_finite,
  dimension_mismatch,
  degenerate_similarity,
  invalid_argument,
  unknown_label,
  label_mismatch,
  malformed_csv,
  solver_failure,
  divergence,
};

std::string_view errc_name(Errc code) noexcept;

class Error : public std::runtime_error {
 public:
  Error(Errc code, const std::string& what)
      : std::runtime_error(std::string(errc_name(code)) + ": " + what), code_(code) {}

  [[nodiscard]] Errc code() const noexcept { return code_; }

 private:
  Errc code_;
};

[[noreturn]] inline void fail(Errc code, const std::string& what) { throw Error(code, what); }

inline void require(bool condition, Errc code, const std::string& what) {
  if (!condition) fail(code, what);
}

}  // namespace fairdiff
