// Copyright 2026 The fairdiff Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

// Synthetic embedding world with a planted attribute direction.
//
// A unit, zero-mean direction g carries the spurious attribute. Pair prompts
// are class vectors displaced by +/- pair_attribute * g; occupation prompts are
// z0 = b + beta * g with sign(beta) the ground-truth skew, and the attribute-
// forced variants sit at z0 +/- variant_shift * g. The calibration learned
// from the pairs shrinks g, so the gate can recover sign(beta) for a suitable
// lambda; at lambda = 0 every skew is zero and nothing is recovered.

#include <cstdint>
#include <string>
#include <vector>

#include "fairdiff/bias_gate.hpp"
#include "fairdiff/embedding.hpp"

namespace fairdiff {

struct PlantedGateConfig {
  std::size_t dim = 32;
  std::size_t occupations = 100;
  std::size_t pair_classes = 24;
  double pair_attribute = 0.5;
  double pair_noise = 0.4;
  double skew_min = 0.02;
  double skew_max = 0.5;
  double variant_shift = 0.5;
  double variant_noise = 0.05;
  double prompt_noise = 0.3;
  std::uint64_t seed = 1234;
};

struct PlantedGateWorld {
  EmbeddingSet pair_rows;  // consecutive (male-attribute, female-attribute) rows
  EmbeddingSet prompts;
  EmbeddingSet male;
  EmbeddingSet female;
  SkewLabelTable labels;
  std::vector<Verdict> truth;  // per prompt, male or female
  std::vector<double> direction;
};

/// Occupation labels are "occupation_000", ...; majority counts are 70/30 in
/// the direction of the planted skew.
[[nodiscard]] PlantedGateWorld make_planted_gate_world(const PlantedGateConfig& config);

/// Same construction for caller-chosen names and skews (positive = first
/// attribute). Used by the toy diffusion world to derive concept embeddings.
[[nodiscard]] PlantedGateWorld make_planted_gate_world(const PlantedGateConfig& config,
                                                       const std::vector<std::string>& names,
                                                       const std::vector<double>& skews);

}  // namespace fairdiff
