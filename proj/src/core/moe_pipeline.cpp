// Copyright 2026 The fairdiff Authors
// SPDX-License-Identifier: Apache-2.0

#include "fairdiff/moe_pipeline.hpp"

#include <cmath>

#include "csv.hpp"
#include "fairdiff/error.hpp"

namespace fairdiff {
namespace {

void validate_row(const ExpertWeights& row, std::string_view name) {
  require(!row.empty(), Errc::invalid_argument, "routing row '" + std::string(name) + "' is empty");
  double total = 0.0;
  for (const auto& [id, w] : row) {
    require(id == kOriginalExpert || id == kMaleExpert || id == kFemaleExpert,
            Errc::invalid_argument,
            "routing row '" + std::string(name) + "' names unknown expert '" + id + "'");
    require(std::isfinite(w) && w >= 0.0, Errc::invalid_argument,
            "routing row '" + std::string(name) + "' has an invalid weight for '" + id + "'");
    total += w;
  }
  require(std::abs(total - 1.0) <= 1e-12, Errc::invalid_argument,
          "routing row '" + std::string(name) + "' sums to " + std::to_string(total) +
              ", expected 1");
}

}  // namespace

RoutingTable RoutingTable::defaults() {
  const std::string o(kOriginalExpert), m(kMaleExpert), f(kFemaleExpert);
  return RoutingTable{
      {{o, 0.4}, {m, 0.1}, {f, 0.5}},
      {{o, 0.4}, {m, 0.5}, {f, 0.1}},
      {{o, 1.0}},
  };
}

void RoutingTable::validate() const {
  validate_row(on_male_skew, "on_male_skew");
  validate_row(on_female_skew, "on_female_skew");
  validate_row(on_none, "on_none");
}

ExpertWeights route(Verdict verdict, const RoutingTable& table) {
  switch (verdict) {
    case Verdict::male:
      return table.on_male_skew;
    case Verdict::female:
      return table.on_female_skew;
    case Verdict::none:
      break;
  }
  return table.on_none;
}

ExpertRegistry::ExpertRegistry(ToyDenoiser base, BiasAdapter male, BiasAdapter female)
    : model_(std::move(base)) {
  require(model_.attention().adapters().empty(), Errc::invalid_argument,
          "the registry base model must not carry adapters");
  const auto dims = model_.dims().attention_dims();
  male.check_dims(dims);
  female.check_dims(dims);
  model_.attention().set_adapter(std::string(kMaleExpert), std::move(male));
  model_.attention().set_adapter(std::string(kFemaleExpert), std::move(female));
}

ExpertRegistry ExpertRegistry::load(const std::filesystem::path& base,
                                    const std::filesystem::path& male,
                                    const std::filesystem::path& female) {
  auto model = load_denoiser(base);
  auto m = load_adapter(male);
  auto f = load_adapter(female);
  require(m.expert_id == kMaleExpert, Errc::label_mismatch,
          male.string() + " holds expert '" + m.expert_id + "', expected 'male'");
  require(f.expert_id == kFemaleExpert, Errc::label_mismatch,
          female.string() + " holds expert '" + f.expert_id + "', expected 'female'");
  return ExpertRegistry(std::move(model), std::move(m.adapter), std::move(f.adapter));
}

std::uint64_t batch_seed(std::uint64_t seed, std::string_view label) noexcept {
  return seed ^ fnv1a64(label);
}

MoeResult moe_generate(const ExpertRegistry& registry, const CalibrationMatrix& calibration,
                       const MoeSettings& settings, const PromptTriple& prompt,
                       std::optional<Verdict> verdict_override, const NoiseSchedule& schedule,
                       std::size_t n, std::uint64_t seed) {
  settings.gate.validate();
  settings.routing.validate();
  MoeResult result;
  result.decision.prompt_label = prompt.label;
  result.decision.skew =
      gender_skew(prompt.prompt, prompt.male, prompt.female, calibration, settings.gate.similarity);
  result.decision.verdict =
      verdict_override.value_or(classify(result.decision.skew, settings.gate.threshold));
  result.weights = route(result.decision.verdict, settings.routing);

  std::optional<std::span<const double>> token;
  if (settings.special_token) token = std::span<const double>(*settings.special_token);
  const ConditioningContext context(prompt.prompt, token);
  const auto& model = registry.model();
  result.samples = sample(make_predictor(model, schedule, result.weights), schedule, context,
                          model.dims().k, n, batch_seed(seed, prompt.label), settings.threads);
  return result;
}

std::string format_samples_csv(const std::vector<SampleRecord>& rows,
                               const AttributeSet& attributes) {
  std::string out = "concept,sample_index,attribute,verdict\n";
  for (const auto& r : rows) {
    out += detail::csv_line({r.concept_name, std::to_string(r.sample_index), r.attribute,
                             verdict_name(r.verdict, attributes)});
  }
  return out;
}

}  // namespace fairdiff
