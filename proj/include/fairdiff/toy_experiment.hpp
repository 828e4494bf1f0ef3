// Copyright 2026 The fairdiff Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

// Configuration and drivers for the toy mitigation experiment: build the
// world, pre-train a biased base model, fine-tune the two bias experts, then
// sample every concept with and without gated routing and score fairness.
//
// The config is a flat JSON object. Every key is optional; unknown keys are
// rejected. All randomness derives from `seed` via derive_seed(seed,
// fnv1a64(<purpose>)) with purposes "world", "model", "special_token",
// "pretrain", "male", "female" and "sample".

#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "fairdiff/bias_gate.hpp"
#include "fairdiff/calibration.hpp"
#include "fairdiff/fairness.hpp"
#include "fairdiff/moe_pipeline.hpp"
#include "fairdiff/toy_diffusion.hpp"

namespace fairdiff {

struct ToyConfig {
  ToyWorldConfig world;
  DenoiserDims dims;
  std::size_t rank = 4;
  /// Adapter scale is adapter_alpha / rank.
  double adapter_alpha = 16.0;
  std::size_t steps_T = 50;
  double beta_min = 1e-4;
  double beta_max = 0.05;
  TrainingConfig expert{2000, 32, 1e-3, 0};
  std::size_t pretrain_steps = 80000;
  double pretrain_lr = 0.05;
  double pretrain_token_prob = 0.5;
  bool special_token_enabled = true;
  GateConfig gate;
  RoutingTable routing = RoutingTable::defaults();
  std::size_t samples_per_concept = 100;
  std::uint64_t seed = 7;

  /// Cross-field checks (k and d_c agree between world and model, ranks,
  /// probabilities, schedule). Throws invalid_argument.
  void validate() const;

  [[nodiscard]] std::uint64_t seed_for(std::string_view purpose) const noexcept;
  [[nodiscard]] NoiseSchedule schedule() const;
  [[nodiscard]] double adapter_scale() const noexcept {
    return adapter_alpha / static_cast<double>(rank);
  }
  [[nodiscard]] std::optional<std::vector<double>> special_token() const;
};

[[nodiscard]] ToyConfig parse_toy_config(std::string_view json_text);
[[nodiscard]] ToyConfig load_toy_config(const std::filesystem::path& path);
/// Full resolved config, every key present.
[[nodiscard]] std::string toy_config_json(const ToyConfig& config);

/// Pipeline config JSON: {"routing": {"on_male_skew": {...}, "on_female_skew":
/// {...}, "on_none": {...}}, "gate": {"lambda", "similarity", "threshold"},
/// "special_token_enabled", "checkpoints": {"base", "male", "female",
/// "calibration"}}. Omitted routing rows keep their defaults.
struct PipelineConfig {
  RoutingTable routing = RoutingTable::defaults();
  GateConfig gate;
  std::optional<bool> special_token_enabled;
  std::optional<std::filesystem::path> base;
  std::optional<std::filesystem::path> male;
  std::optional<std::filesystem::path> female;
  std::optional<std::filesystem::path> calibration;
};

[[nodiscard]] PipelineConfig parse_pipeline_config(std::string_view json_text);
[[nodiscard]] PipelineConfig load_pipeline_config(const std::filesystem::path& path);

[[nodiscard]] SyntheticWorld build_world(const ToyConfig& config);

/// Calibration from the world's pair rows at config.gate.lambda.
[[nodiscard]] CalibrationMatrix build_world_calibration(const SyntheticWorld& world,
                                                        const ToyConfig& config);

struct PretrainResult {
  ToyDenoiser model;
  TrainingReport report;
};
[[nodiscard]] PretrainResult run_pretrain(const ToyConfig& config, const SyntheticWorld& world);

struct ExpertResult {
  BiasAdapter male;
  BiasAdapter female;
  TrainingReport male_report;
  TrainingReport female_report;
};
/// Trains both experts from copies of `base`; the two runs are independent
/// and execute concurrently when threads > 1.
[[nodiscard]] ExpertResult run_train_experts(const ToyConfig& config, const SyntheticWorld& world,
                                             const ToyDenoiser& base, std::size_t threads = 1);

struct ConceptSamples {
  GateDecision decision;
  ExpertWeights weights;
  std::vector<std::vector<double>> samples;
  std::vector<std::size_t> attributes;  // oracle labels
};

/// Samples every concept. With `registry` absent the base model is used
/// alone (verdict recorded as computed by the gate, routing ignored).
/// `override` forces one verdict for every concept.
[[nodiscard]] std::vector<ConceptSamples> sample_world(
    const ToyConfig& config, const SyntheticWorld& world, const ToyDenoiser& base,
    const ExpertRegistry* registry, const CalibrationMatrix& calibration,
    std::optional<Verdict> verdict_override, std::size_t threads);

[[nodiscard]] LabelTable to_label_table(const SyntheticWorld& world,
                                        const std::vector<ConceptSamples>& samples);
[[nodiscard]] std::vector<SampleRecord> to_sample_records(
    const SyntheticWorld& world, const std::vector<ConceptSamples>& samples);

struct E2EResult {
  TrainingReport pretrain;
  TrainingReport male;
  TrainingReport female;
  std::vector<GateDecision> decisions;
  std::size_t gate_correct = 0;
  FairnessReport before;
  FairnessReport after;
};

using ProgressFn = std::function<void(std::string_view)>;

[[nodiscard]] E2EResult run_e2e(const ToyConfig& config, std::size_t threads,
                                const ProgressFn& progress = {});

/// Report JSON: config seed, training losses, gate decisions, before/after
/// fairness. Contains no timing, so identical inputs give identical bytes.
[[nodiscard]] std::string e2e_report_json(const ToyConfig& config, const E2EResult& result);

}  // namespace fairdiff
