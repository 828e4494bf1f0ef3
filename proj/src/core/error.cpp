// Copyright 2026 The fairdiff Authors
// SPDX-License-Identifier: Apache-2.0

#include "fairdiff/error.hpp"

namespace fairdiff {

std::string_view errc_name(Errc code) noexcept {
  switch (code) {
    case Errc::io: return "io";
    case Errc::bad_magic: return "bad_magic";
    case Errc::version_mismatch: return "version_mismatch";
    case Errc::truncated: return "truncated";
    case Errc::trailing_bytes: return "trailing_bytes";
    case Errc::label_count_mismatch: return "label_count_mismatch";
    case Errc::duplicate_label: return "duplicate_label";
    case Errc::non_finite: return "non_finite";
    case Errc::dimension_mismatch: return "dimension_mismatch";
    case Errc::degenerate_similarity: return "degenerate_similarity";
    case Errc::invalid_argument: return "invalid_argument";
    case Errc::unknown_label: return "unknown_label";
    case Errc::label_mismatch: return "label_mismatch";
    case Errc::malformed_csv: return "malformed_csv";
    case Errc::solver_failure: return "solver_failure";
    case Errc::divergence: return "divergence";
  }
  return "unknown";
}

}  // namespace fairdiff
