// Copyright 2026 The fairdiff Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

// Gated mixture-of-experts sampling.
//
// The bias gate reads a prompt triple (z0, z_male, z_female) and returns a
// verdict; the routing table turns that verdict into weights over the
// original model and the two bias experts; sampling then mixes the experts
// inside every cross-attention call of every denoising step.

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "fairdiff/bias_gate.hpp"
#include "fairdiff/calibration.hpp"
#include "fairdiff/toy_diffusion.hpp"

namespace fairdiff {

inline constexpr std::string_view kMaleExpert = "male";
inline constexpr std::string_view kFemaleExpert = "female";

struct RoutingTable {
  ExpertWeights on_male_skew;
  ExpertWeights on_female_skew;
  ExpertWeights on_none;

  /// Male skew: original 0.4, male 0.1, female 0.5. Female skew mirrors it.
  /// No skew: original alone.
  static RoutingTable defaults();

  /// Every row uses only {original, male, female}, has non-negative finite
  /// weights, and sums to 1 within 1e-12.
  void validate() const;

  friend bool operator==(const RoutingTable&, const RoutingTable&) = default;
};

/// Pure lookup: male -> on_male_skew, female -> on_female_skew, none -> on_none.
[[nodiscard]] ExpertWeights route(Verdict verdict, const RoutingTable& table);

/// Base model plus exactly the male and female adapters.
class ExpertRegistry {
 public:
  ExpertRegistry(ToyDenoiser base, BiasAdapter male, BiasAdapter female);

  /// Reads a TDEN base checkpoint and two BIAS checkpoints whose stored ids
  /// must be "male" and "female" respectively.
  static ExpertRegistry load(const std::filesystem::path& base,
                             const std::filesystem::path& male,
                             const std::filesystem::path& female);

  [[nodiscard]] const ToyDenoiser& model() const noexcept { return model_; }

 private:
  ToyDenoiser model_;
};

struct PromptTriple {
  std::string label;
  std::vector<double> prompt;  // z0; also the conditioning embedding
  std::vector<double> male;
  std::vector<double> female;
};

struct MoeResult {
  std::vector<std::vector<double>> samples;
  GateDecision decision;  // one audit record per generated batch
  ExpertWeights weights;
};

struct MoeSettings {
  GateConfig gate;
  RoutingTable routing = RoutingTable::defaults();
  std::optional<std::vector<double>> special_token;
  std::size_t threads = 1;
};

/// Stable per-batch seed: seed XOR fnv1a64(label).
[[nodiscard]] std::uint64_t batch_seed(std::uint64_t seed, std::string_view label) noexcept;

/// Runs the gate (unless `verdict_override` is set, in which case the skew is
/// still computed and recorded but the override decides the routing), routes,
/// and draws n samples with seed batch_seed(seed, prompt.label).
[[nodiscard]] MoeResult moe_generate(const ExpertRegistry& registry,
                                     const CalibrationMatrix& calibration,
                                     const MoeSettings& settings, const PromptTriple& prompt,
                                     std::optional<Verdict> verdict_override,
                                     const NoiseSchedule& schedule, std::size_t n,
                                     std::uint64_t seed);

struct SampleRecord {
  std::string concept_name;
  std::size_t sample_index = 0;
  std::string attribute;
  Verdict verdict = Verdict::none;
};

/// CSV with header `concept,sample_index,attribute,verdict`.
[[nodiscard]] std::string format_samples_csv(const std::vector<SampleRecord>& rows,
                                             const AttributeSet& attributes = AttributeSet::gender());

}  // namespace fairdiff
