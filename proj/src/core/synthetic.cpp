// Copyright 2026 The fairdiff Authors
// SPDX-License-Identifier: Apache-2.0

#include "fairdiff/synthetic.hpp"

#include <cmath>
#include <cstdio>

#include "fairdiff/error.hpp"
#include "fairdiff/kernels.hpp"
#include "fairdiff/rng.hpp"

namespace fairdiff {
namespace {

std::vector<double> gaussian(Rng& rng, std::size_t n, double stddev) {
  std::vector<double> v(n);
  for (auto& x : v) x = rng.normal(0.0, stddev);
  return v;
}

std::vector<double> unit_direction(Rng& rng, std::size_t dim) {
  auto g = gaussian(rng, dim, 1.0);
  double mean = 0.0;
  for (double x : g) mean += x;
  mean /= static_cast<double>(dim);
  for (auto& x : g) x -= mean;
  const double norm = std::sqrt(kernels::dot(g, g));
  for (auto& x : g) x /= norm;
  return g;
}

// Random vector with entries ~ N(0, 1/dim) and no component along g.
std::vector<double> off_axis(Rng& rng, const std::vector<double>& g) {
  auto b = gaussian(rng, g.size(), 1.0 / std::sqrt(static_cast<double>(g.size())));
  kernels::axpy(-kernels::dot(b, g), g, b);
  return b;
}

void add_noise(Rng& rng, std::vector<double>& v, double scale) {
  const double stddev = scale / std::sqrt(static_cast<double>(v.size()));
  for (auto& x : v) x += rng.normal(0.0, stddev);
}

}  // namespace

PlantedGateWorld make_planted_gate_world(const PlantedGateConfig& config,
                                         const std::vector<std::string>& names,
                                         const std::vector<double>& skews) {
  require(config.dim >= 2 && config.pair_classes >= 1, Errc::invalid_argument,
          "planted world needs dim >= 2 and at least one pair class");
  require(names.size() == skews.size(), Errc::invalid_argument,
          "planted world: one skew per name");
  Rng rng(config.seed);
  const auto g = unit_direction(rng, config.dim);

  PlantedGateWorld world{EmbeddingSet(config.dim), EmbeddingSet(config.dim),
                         EmbeddingSet(config.dim), EmbeddingSet(config.dim), {}, {}, g};

  for (std::size_t c = 0; c < config.pair_classes; ++c) {
    const auto base = off_axis(rng, g);
    auto with_first = base;
    auto with_second = base;
    kernels::axpy(config.pair_attribute, g, with_first);
    kernels::axpy(-config.pair_attribute, g, with_second);
    add_noise(rng, with_first, config.pair_noise);
    add_noise(rng, with_second, config.pair_noise);
    char label[64];
    std::snprintf(label, sizeof label, "class_%03zu/male", c);
    world.pair_rows.add(label, EmbeddingVector(std::move(with_first)));
    std::snprintf(label, sizeof label, "class_%03zu/female", c);
    world.pair_rows.add(label, EmbeddingVector(std::move(with_second)));
  }

  std::vector<SkewLabelTable::Row> rows;
  for (std::size_t i = 0; i < names.size(); ++i) {
    auto z0 = off_axis(rng, g);
    kernels::axpy(skews[i], g, z0);
    add_noise(rng, z0, config.prompt_noise);
    auto zm = z0;
    auto zf = z0;
    kernels::axpy(config.variant_shift, g, zm);
    kernels::axpy(-config.variant_shift, g, zf);
    add_noise(rng, zm, config.variant_noise);
    add_noise(rng, zf, config.variant_noise);
    world.prompts.add(names[i], EmbeddingVector(std::move(z0)));
    world.male.add(names[i], EmbeddingVector(std::move(zm)));
    world.female.add(names[i], EmbeddingVector(std::move(zf)));
    const bool first = skews[i] > 0.0;
    world.truth.push_back(first ? Verdict::male : Verdict::female);
    rows.push_back({names[i], first ? 70 : 30, first ? 30 : 70});
  }
  world.labels = SkewLabelTable(std::move(rows));
  return world;
}

PlantedGateWorld make_planted_gate_world(const PlantedGateConfig& config) {
  require(config.skew_min > 0.0 && config.skew_max >= config.skew_min, Errc::invalid_argument,
          "planted world needs 0 < skew_min <= skew_max");
  Rng rng(derive_seed(config.seed, 0x5ca1ab1e));
  std::vector<std::string> names;
  std::vector<double> skews;
  for (std::size_t i = 0; i < config.occupations; ++i) {
    char label[64];
    std::snprintf(label, sizeof label, "occupation_%03zu", i);
    names.emplace_back(label);
    const double sign = rng.uniform() < 0.5 ? 1.0 : -1.0;
    skews.push_back(sign * rng.uniform(config.skew_min, config.skew_max));
  }
  return make_planted_gate_world(config, names, skews);
}

}  // namespace fairdiff
