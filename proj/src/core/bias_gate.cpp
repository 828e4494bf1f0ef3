// Copyright 2026 The fairdiff Authors
// SPDX-License-Identifier: Apache-2.0

#include "fairdiff/bias_gate.hpp"

#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <set>

#include "csv.hpp"
#include "fairdiff/error.hpp"
#include "fairdiff/parallel.hpp"

namespace fairdiff {

std::string verdict_name(Verdict v, const AttributeSet& attributes) {
  switch (v) {
    case Verdict::male:
      return attributes[0];
    case Verdict::female:
      return attributes[1];
    case Verdict::none:
      return "none";
  }
  return "none";
}

std::optional<Verdict> parse_verdict(std::string_view name, const AttributeSet& attributes) {
  if (name == attributes[0]) return Verdict::male;
  if (name == attributes[1]) return Verdict::female;
  if (name == "none") return Verdict::none;
  return std::nullopt;
}

void GateConfig::validate() const {
  require(std::isfinite(lambda) && lambda >= 0.0, Errc::invalid_argument,
          "gate lambda must be finite and >= 0");
  require(std::isfinite(threshold) && threshold >= 0.0, Errc::invalid_argument,
          "gate activation threshold must be finite and >= 0");
}

SkewLabelTable::SkewLabelTable(std::vector<Row> rows) : rows_(std::move(rows)) {
  for (std::size_t i = 0; i < rows_.size(); ++i) {
    const auto& row = rows_[i];
    require(row.male_count >= 0 && row.female_count >= 0, Errc::invalid_argument,
            "negative count for '" + row.occupation + "'");
    require(index_.emplace(row.occupation, i).second, Errc::duplicate_label,
            "occupation '" + row.occupation + "' listed twice in the label table");
  }
}

const SkewLabelTable::Row* SkewLabelTable::find(std::string_view occupation) const {
  auto it = index_.find(occupation);
  return it == index_.end() ? nullptr : &rows_[it->second];
}

Verdict SkewLabelTable::majority(const Row& row) noexcept {
  return 2 * row.male_count > row.male_count + row.female_count ? Verdict::male : Verdict::female;
}

double delta_similarity(std::span<const double> z0, std::span<const double> zt,
                        const CalibrationMatrix& c, SimilarityKind kind) {
  const auto calibrated = project(c, z0);
  return std::abs(similarity(kind, z0, zt) - similarity(kind, calibrated, zt));
}

double gender_skew(std::span<const double> z0, std::span<const double> z_male,
                   std::span<const double> z_female, const CalibrationMatrix& c,
                   SimilarityKind kind) {
  require(z_male.size() == z0.size() && z_female.size() == z0.size(), Errc::dimension_mismatch,
          "gender_skew: prompt and variants must have equal length");
  // The projection of z0 is shared by both terms.
  const auto calibrated = project(c, z0);
  const double to_male =
      std::abs(similarity(kind, z0, z_male) - similarity(kind, calibrated, z_male));
  const double to_female =
      std::abs(similarity(kind, z0, z_female) - similarity(kind, calibrated, z_female));
  return to_male - to_female;
}

double baseline_skew(std::span<const double> z0, std::span<const double> z_male,
                     std::span<const double> z_female, SimilarityKind kind) {
  return similarity(kind, z0, z_male) - similarity(kind, z0, z_female);
}

Verdict classify(double skew, double threshold) {
  if (skew > threshold) return Verdict::male;
  if (skew < -threshold) return Verdict::female;
  return Verdict::none;
}

GateInputs::GateInputs(EmbeddingSet prompts, EmbeddingSet male, EmbeddingSet female)
    : prompts_(std::move(prompts)), male_(std::move(male)), female_(std::move(female)) {
  require(male_.dim() == prompts_.dim() && female_.dim() == prompts_.dim(),
          Errc::dimension_mismatch, "prompt and variant embedding sets differ in dimension");
  require(male_.size() == prompts_.size() && female_.size() == prompts_.size(),
          Errc::label_mismatch,
          "prompt/male/female files hold " + std::to_string(prompts_.size()) + "/" +
              std::to_string(male_.size()) + "/" + std::to_string(female_.size()) + " rows");
  for (std::size_t i = 0; i < prompts_.size(); ++i) {
    const auto& label = prompts_.label(i);
    const auto m = male_.find(label);
    const auto f = female_.find(label);
    require(m.has_value(), Errc::label_mismatch, "'" + label + "' missing from the male variants");
    require(f.has_value(), Errc::label_mismatch,
            "'" + label + "' missing from the female variants");
    male_index_.push_back(*m);
    female_index_.push_back(*f);
  }
}

std::vector<GateDecision> run_gate(const GateInputs& inputs, const CalibrationMatrix& c,
                                   const GateConfig& config, std::size_t threads) {
  config.validate();
  require(c.dim() == inputs.dim(), Errc::dimension_mismatch,
          "calibration dim " + std::to_string(c.dim()) + " vs embeddings dim " +
              std::to_string(inputs.dim()));
  std::vector<GateDecision> out(inputs.size());
  parallel_for(inputs.size(), threads, [&](std::size_t i) {
    const double skew = gender_skew(inputs.prompt(i).values(), inputs.male(i).values(),
                                    inputs.female(i).values(), c, config.similarity);
    out[i] = GateDecision{inputs.label(i), skew, classify(skew, config.threshold)};
  });
  return out;
}

std::vector<GateDecision> run_baseline_gate(const GateInputs& inputs, SimilarityKind kind,
                                            double threshold) {
  std::vector<GateDecision> out;
  out.reserve(inputs.size());
  for (std::size_t i = 0; i < inputs.size(); ++i) {
    const double skew = baseline_skew(inputs.prompt(i).values(), inputs.male(i).values(),
                                      inputs.female(i).values(), kind);
    out.push_back({inputs.label(i), skew, classify(skew, threshold)});
  }
  return out;
}

GateEvaluation evaluate_gate(const std::vector<GateDecision>& decisions,
                             const SkewLabelTable& labels) {
  GateEvaluation eval;
  std::set<std::string, std::less<>> seen;
  for (const auto& d : decisions) {
    const auto* row = labels.find(d.prompt_label);
    require(row != nullptr, Errc::unknown_label,
            "'" + d.prompt_label + "' has no row in the label table");
    require(seen.insert(d.prompt_label).second, Errc::duplicate_label,
            "'" + d.prompt_label + "' decided more than once");
    ++eval.total;
    if (d.verdict != Verdict::none && d.verdict == SkewLabelTable::majority(*row)) ++eval.correct;
  }
  return eval;
}

std::vector<SweepRow> sweep_lambda(const PromptPairSet& pairs, const GateInputs& inputs,
                                   const SkewLabelTable& labels, const std::vector<double>& lambdas,
                                   SimilarityKind kind, double threshold, std::size_t threads) {
  require(!lambdas.empty(), Errc::invalid_argument, "lambda sweep needs at least one value");
  std::vector<SweepRow> rows;
  rows.reserve(lambdas.size());
  for (double lambda : lambdas) {
    const GateConfig config{lambda, kind, threshold};
    const auto decisions = run_gate(inputs, build_calibration(pairs, lambda), config, threads);
    const auto eval = evaluate_gate(decisions, labels);
    rows.push_back({lambda, eval.correct, eval.total});
  }
  return rows;
}

std::size_t best_sweep_row(const std::vector<SweepRow>& rows) {
  require(!rows.empty(), Errc::invalid_argument, "empty sweep");
  std::size_t best = 0;
  for (std::size_t i = 1; i < rows.size(); ++i)
    if (rows[i].correct > rows[best].correct) best = i;
  return best;
}

namespace {

std::string format_g9(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.9g", v);
  return buf;
}

double parse_real(const std::string& field, std::size_t line) {
  char* end = nullptr;
  const double v = std::strtod(field.c_str(), &end);
  require(!field.empty() && end == field.c_str() + field.size() && std::isfinite(v),
          Errc::malformed_csv,
          "data row " + std::to_string(line) + ": '" + field + "' is not a finite number");
  return v;
}

}  // namespace

std::string format_decisions_csv(const std::vector<GateDecision>& decisions,
                                 const AttributeSet& attributes) {
  std::string out = "prompt,skew,verdict\n";
  for (const auto& d : decisions) {
    out += detail::csv_line({d.prompt_label, format_g9(d.skew), verdict_name(d.verdict, attributes)});
  }
  return out;
}

std::vector<GateDecision> parse_decisions_csv(std::string_view text,
                                              const AttributeSet& attributes) {
  const auto rows = detail::parse_csv_with_header(text, {"prompt", "skew", "verdict"}, "decisions");
  std::vector<GateDecision> out;
  for (std::size_t i = 0; i < rows.size(); ++i) {
    const auto verdict = parse_verdict(rows[i][2], attributes);
    require(verdict.has_value(), Errc::malformed_csv,
            "decisions row " + std::to_string(i + 1) + ": unknown verdict '" + rows[i][2] + "'");
    out.push_back({rows[i][0], parse_real(rows[i][1], i + 1), *verdict});
  }
  return out;
}

SkewLabelTable parse_label_table_csv(std::string_view text) {
  const auto rows = detail::parse_csv_with_header(
      text, {"occupation", "male_count", "female_count"}, "labels");
  std::vector<SkewLabelTable::Row> out;
  for (std::size_t i = 0; i < rows.size(); ++i) {
    out.push_back({rows[i][0], detail::parse_count(rows[i][1], "labels", i + 1),
                   detail::parse_count(rows[i][2], "labels", i + 1)});
  }
  return SkewLabelTable(std::move(out));
}

std::string format_label_table_csv(const SkewLabelTable& table) {
  std::string out = "occupation,male_count,female_count\n";
  for (const auto& row : table.rows()) {
    out += detail::csv_line(
        {row.occupation, std::to_string(row.male_count), std::to_string(row.female_count)});
  }
  return out;
}

std::string format_sweep_csv(const std::vector<SweepRow>& rows) {
  std::string out = "lambda,correct,total,accuracy\n";
  for (const auto& r : rows) {
    out += detail::csv_line({format_g9(r.lambda), std::to_string(r.correct),
                             std::to_string(r.total), format_g9(r.accuracy())});
  }
  return out;
}

SkewLabelTable load_label_table(const std::filesystem::path& path) {
  return parse_label_table_csv(read_file_bytes(path));
}

}  // namespace fairdiff
