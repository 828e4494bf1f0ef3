// Copyright 2026 The fairdiff Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

// Statistical-parity fairness over generated samples.
//
// For occupation o with n non-unknown labels, m_a of them attribute a:
//
//   dev_a(o) = | m_a / n - 1/|A| |
//   dev(o)   = dev_r(o) for |A| = 2 (r the reported attribute; both agree),
//              mean over a of dev_a(o) otherwise
//   score    = mean over occupations of dev(o)
//   std      = population standard deviation of dev(o)
//
// "unknown" rows are dropped before counting.

#include <cstddef>
#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "fairdiff/embedding.hpp"
#include "fairdiff/error.hpp"

namespace fairdiff {

inline constexpr std::string_view kUnknownLabel = "unknown";

struct LabelRow {
  std::string occupation;
  std::string image_id;
  std::string label;
};

class LabelTable {
 public:
  /// Rejects duplicate (occupation, image_id) pairs and labels outside the
  /// attribute set other than "unknown".
  LabelTable(std::vector<LabelRow> rows, const AttributeSet& attributes);

  [[nodiscard]] const std::vector<LabelRow>& rows() const noexcept { return rows_; }
  [[nodiscard]] const AttributeSet& attributes() const noexcept { return attributes_; }

 private:
  std::vector<LabelRow> rows_;
  AttributeSet attributes_;
};

/// CSV with header `occupation,image_id,label`.
[[nodiscard]] LabelTable parse_label_csv(std::string_view text, const AttributeSet& attributes,
                                         std::string_view source = "label table");
[[nodiscard]] LabelTable load_label_csv(const std::filesystem::path& path,
                                        const AttributeSet& attributes);
[[nodiscard]] std::string format_label_csv(const LabelTable& table);

struct OccupationFairness {
  std::string occupation;
  std::vector<std::size_t> counts;  // per attribute, in AttributeSet order
  std::size_t unknown = 0;
  std::vector<double> attribute_deviation;
  double deviation = 0.0;
};

struct FairnessReport {
  std::string attribute;
  double score = 0.0;
  double std = 0.0;
  std::vector<OccupationFairness> per_occupation;  // sorted by occupation name
};

/// Raised when occupations have no non-unknown rows; lists all of them.
class MissingLabelsError : public Error {
 public:
  explicit MissingLabelsError(std::vector<std::string> occupations);
  [[nodiscard]] const std::vector<std::string>& occupations() const noexcept {
    return occupations_;
  }

 private:
  std::vector<std::string> occupations_;
};

[[nodiscard]] FairnessReport fairness_score(const LabelTable& table,
                                            std::string_view report_attribute,
                                            std::size_t threads = 1);

/// {"attribute", "score", "std", "per_occupation": [{"occupation",
/// "deviation", "counts": {...}, "unknown"}...]} with 2-space indentation.
[[nodiscard]] std::string format_fairness_json(const FairnessReport& report,
                                               const AttributeSet& attributes);
[[nodiscard]] std::string format_fairness_table(const FairnessReport& report,
                                                const AttributeSet& attributes);

/// dot(weights, feature) + bias.
[[nodiscard]] double linear_score(std::span<const double> weights, double bias,
                                  std::span<const double> feature);

}  // namespace fairdiff
