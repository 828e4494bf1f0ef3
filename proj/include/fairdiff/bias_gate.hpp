// Copyright 2026 The fairdiff Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

// Bias identification gate.
//
// For a prompt embedding z0 and its attribute-forced variants (for example
// "a photo of the face of a male nurse" / "... female nurse"):
//
//   dS(z0, zt) = | sim(z0, zt) - sim(C z0, zt) |
//   skew(z0)   = dS(z0, z_male) - dS(z0, z_female)
//
// skew > threshold routes to "male", skew < -threshold to "female", anything
// else (including an exact zero at threshold 0) to "none", meaning no bias
// expert is activated.
//
// Verdicts are named after the gender attribute set; for other binary
// attribute sets (skin tone) `male` stands for the first attribute and
// `female` for the second, and CSV output uses the attribute names.

#include <cstddef>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "fairdiff/calibration.hpp"
#include "fairdiff/embedding.hpp"
#include "fairdiff/similarity.hpp"

namespace fairdiff {

enum class Verdict { male, female, none };

[[nodiscard]] std::string verdict_name(Verdict v,
                                       const AttributeSet& attributes = AttributeSet::gender());
[[nodiscard]] std::optional<Verdict> parse_verdict(
    std::string_view name, const AttributeSet& attributes = AttributeSet::gender());

struct GateConfig {
  double lambda = 4000.0;
  SimilarityKind similarity = SimilarityKind::pearson;
  double threshold = 0.0;

  /// Throws invalid_argument on a negative or non-finite lambda/threshold.
  void validate() const;
};

struct GateDecision {
  std::string prompt_label;
  double skew = 0.0;
  Verdict verdict = Verdict::none;

  friend bool operator==(const GateDecision&, const GateDecision&) = default;
};

/// Per-occupation attribute counts from a reference generator.
class SkewLabelTable {
 public:
  struct Row {
    std::string occupation;
    long long male_count = 0;
    long long female_count = 0;
  };

  SkewLabelTable() = default;
  explicit SkewLabelTable(std::vector<Row> rows);

  [[nodiscard]] const std::vector<Row>& rows() const noexcept { return rows_; }
  [[nodiscard]] std::size_t size() const noexcept { return rows_.size(); }
  [[nodiscard]] const Row* find(std::string_view occupation) const;

  /// Male only when the male count is strictly more than half the total;
  /// an exact half (or an empty row) is female.
  [[nodiscard]] static Verdict majority(const Row& row) noexcept;

 private:
  std::vector<Row> rows_;
  std::map<std::string, std::size_t, std::less<>> index_;
};

[[nodiscard]] double delta_similarity(std::span<const double> z0, std::span<const double> zt,
                                      const CalibrationMatrix& c, SimilarityKind kind);

[[nodiscard]] double gender_skew(std::span<const double> z0, std::span<const double> z_male,
                                 std::span<const double> z_female, const CalibrationMatrix& c,
                                 SimilarityKind kind);

/// sim(z0, z_male) - sim(z0, z_female), no calibration.
[[nodiscard]] double baseline_skew(std::span<const double> z0, std::span<const double> z_male,
                                   std::span<const double> z_female, SimilarityKind kind);

[[nodiscard]] Verdict classify(double skew, double threshold);

/// Prompt embeddings and their two attribute-forced variants. The three sets
/// must carry the same labels; variants are matched to prompts by label.
class GateInputs {
 public:
  GateInputs(EmbeddingSet prompts, EmbeddingSet male, EmbeddingSet female);

  [[nodiscard]] std::size_t size() const noexcept { return prompts_.size(); }
  [[nodiscard]] std::size_t dim() const noexcept { return prompts_.dim(); }
  [[nodiscard]] const std::string& label(std::size_t i) const { return prompts_.label(i); }
  [[nodiscard]] const EmbeddingVector& prompt(std::size_t i) const { return prompts_.vector(i); }
  [[nodiscard]] const EmbeddingVector& male(std::size_t i) const {
    return male_.vector(male_index_[i]);
  }
  [[nodiscard]] const EmbeddingVector& female(std::size_t i) const {
    return female_.vector(female_index_[i]);
  }

 private:
  EmbeddingSet prompts_;
  EmbeddingSet male_;
  EmbeddingSet female_;
  std::vector<std::size_t> male_index_;
  std::vector<std::size_t> female_index_;
};

/// One decision per prompt, in prompt order. `threads` > 1 evaluates prompts
/// concurrently; results are identical for any thread count.
[[nodiscard]] std::vector<GateDecision> run_gate(const GateInputs& inputs,
                                                 const CalibrationMatrix& c, const GateConfig& config,
                                                 std::size_t threads = 1);

/// Uncalibrated comparison gate (sim to male variant minus sim to female).
[[nodiscard]] std::vector<GateDecision> run_baseline_gate(const GateInputs& inputs,
                                                          SimilarityKind kind, double threshold);

struct GateEvaluation {
  std::size_t correct = 0;
  std::size_t total = 0;
  [[nodiscard]] double accuracy() const noexcept {
    return total == 0 ? 0.0 : static_cast<double>(correct) / static_cast<double>(total);
  }
};

/// A decision is correct when its verdict equals the label table's majority;
/// a `none` verdict is never correct. Throws unknown_label for a prompt
/// missing from the table and duplicate_label for repeated prompts.
[[nodiscard]] GateEvaluation evaluate_gate(const std::vector<GateDecision>& decisions,
                                           const SkewLabelTable& labels);

struct SweepRow {
  double lambda = 0.0;
  std::size_t correct = 0;
  std::size_t total = 0;
  [[nodiscard]] double accuracy() const noexcept {
    return total == 0 ? 0.0 : static_cast<double>(correct) / static_cast<double>(total);
  }
};

/// One gate evaluation per lambda, in the order given.
[[nodiscard]] std::vector<SweepRow> sweep_lambda(const PromptPairSet& pairs,
                                                 const GateInputs& inputs,
                                                 const SkewLabelTable& labels,
                                                 const std::vector<double>& lambdas,
                                                 SimilarityKind kind, double threshold,
                                                 std::size_t threads = 1);

/// Index of the row with the most correct decisions; ties go to the earliest.
[[nodiscard]] std::size_t best_sweep_row(const std::vector<SweepRow>& rows);

// CSV surfaces.
//   decisions: prompt,skew,verdict   (skew printed with 9 significant digits)
//   labels:    occupation,male_count,female_count
[[nodiscard]] std::string format_decisions_csv(
    const std::vector<GateDecision>& decisions,
    const AttributeSet& attributes = AttributeSet::gender());
[[nodiscard]] std::vector<GateDecision> parse_decisions_csv(
    std::string_view text, const AttributeSet& attributes = AttributeSet::gender());
[[nodiscard]] SkewLabelTable parse_label_table_csv(std::string_view text);
[[nodiscard]] std::string format_label_table_csv(const SkewLabelTable& table);
[[nodiscard]] std::string format_sweep_csv(const std::vector<SweepRow>& rows);

[[nodiscard]] SkewLabelTable load_label_table(const std::filesystem::path& path);

}  // namespace fairdiff
