// Copyright 2026 The fairdiff Authors
// SPDX-License-Identifier: Apache-2.0

#include "fairdiff/similarity.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>
#include <vector>

#include "fairdiff/error.hpp"
#include "fairdiff/kernels.hpp"

namespace fairdiff {
namespace {

void check_pair(std::span<const double> a, std::span<const double> b) {
  require(a.size() == b.size(), Errc::dimension_mismatch,
          "similarity inputs have lengths " + std::to_string(a.size()) + " and " +
              std::to_string(b.size()));
  require(a.size() >= 2, Errc::invalid_argument, "similarity needs vectors of length >= 2");
}

std::vector<double> centered(std::span<const double> v) {
  const double mean = std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
  std::vector<double> out(v.begin(), v.end());
  for (auto& x : out) x -= mean;
  return out;
}

// Zero variance up to the rounding left over from subtracting the mean.
bool is_flat(std::span<const double> original, std::span<const double> centered_values) {
  double scale = 0.0;
  for (double x : original) scale = std::max(scale, std::abs(x));
  const double spread = std::sqrt(kernels::dot(centered_values, centered_values));
  return spread <= 1e-12 * scale * std::sqrt(static_cast<double>(original.size())) ||
         spread == 0.0;
}

double clamp_unit(double v) { return std::clamp(v, -1.0, 1.0); }

double cosine(std::span<const double> a, std::span<const double> b) {
  const double na = kernels::dot(a, a);
  const double nb = kernels::dot(b, b);
  require(na > 0.0 && nb > 0.0, Errc::degenerate_similarity, "cosine of a zero vector");
  return clamp_unit(kernels::dot(a, b) / std::sqrt(na * nb));
}

double jaccard(std::span<const double> a, std::span<const double> b) {
  const double shift =
      std::min(*std::min_element(a.begin(), a.end()), *std::min_element(b.begin(), b.end()));
  double num = 0.0;
  double den = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double x = a[i] - shift;
    const double y = b[i] - shift;
    num += std::min(x, y);
    den += std::max(x, y);
  }
  require(den > 0.0, Errc::degenerate_similarity,
          "jaccard: every shifted entry is zero (all inputs equal)");
  return num / den;
}

}  // namespace

std::string_view similarity_name(SimilarityKind kind) noexcept {
  switch (kind) {
    case SimilarityKind::pearson:
      return "pearson";
    case SimilarityKind::cosine:
      return "cosine";
    case SimilarityKind::neg_euclidean:
      return "neg_euclidean";
    case SimilarityKind::neg_manhattan:
      return "neg_manhattan";
    case SimilarityKind::jaccard:
      return "jaccard";
  }
  return "unknown";
}

std::optional<SimilarityKind> parse_similarity(std::string_view name) noexcept {
  for (auto kind : {SimilarityKind::pearson, SimilarityKind::cosine, SimilarityKind::neg_euclidean,
                    SimilarityKind::neg_manhattan, SimilarityKind::jaccard}) {
    if (similarity_name(kind) == name) return kind;
  }
  return std::nullopt;
}

double pearson_similarity(std::span<const double> a, std::span<const double> b) {
  check_pair(a, b);
  const auto ca = centered(a);
  const auto cb = centered(b);
  require(!is_flat(a, ca) && !is_flat(b, cb), Errc::degenerate_similarity,
          "pearson: input has zero variance");
  const double sa = kernels::dot(ca, ca);
  const double sb = kernels::dot(cb, cb);
  return clamp_unit(kernels::dot(ca, cb) / std::sqrt(sa * sb));
}

double similarity(SimilarityKind kind, std::span<const double> a, std::span<const double> b) {
  check_pair(a, b);
  switch (kind) {
    case SimilarityKind::pearson:
      return pearson_similarity(a, b);
    case SimilarityKind::cosine:
      return cosine(a, b);
    case SimilarityKind::neg_euclidean:
      return -std::sqrt(kernels::squared_distance(a, b));
    case SimilarityKind::neg_manhattan: {
      double acc = 0.0;
      for (std::size_t i = 0; i < a.size(); ++i) acc += std::abs(a[i] - b[i]);
      return -acc;
    }
    case SimilarityKind::jaccard:
      return jaccard(a, b);
  }
  fail(Errc::invalid_argument, "unknown similarity kind");
}

}  // namespace fairdiff
