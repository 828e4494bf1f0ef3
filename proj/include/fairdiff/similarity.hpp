// Copyright 2026 The fairdiff Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <optional>
#include <span>
#include <string_view>

#include "fairdiff/embedding.hpp"

namespace fairdiff {

/// Similarity measures for the gate. Every kind follows a higher-is-closer
/// convention; the two distances are returned negated.
enum class SimilarityKind { pearson, cosine, neg_euclidean, neg_manhattan, jaccard };

[[nodiscard]] std::string_view similarity_name(SimilarityKind kind) noexcept;
[[nodiscard]] std::optional<SimilarityKind> parse_similarity(std::string_view name) noexcept;

/// Sample correlation of paired components. Throws degenerate_similarity if
/// either input has zero variance.
[[nodiscard]] double pearson_similarity(std::span<const double> a, std::span<const double> b);

/// Jaccard on real vectors is the generalized form sum(min)/sum(max) after
/// both vectors are shifted by their joint minimum, making every entry >= 0.
/// This is an approximation of set Jaccard, kept for baseline comparisons.
[[nodiscard]] double similarity(SimilarityKind kind, std::span<const double> a,
                                std::span<const double> b);

inline double pearson_similarity(const EmbeddingVector& a, const EmbeddingVector& b) {
  return pearson_similarity(a.values(), b.values());
}
inline double similarity(SimilarityKind kind, const EmbeddingVector& a, const EmbeddingVector& b) {
  return similarity(kind, a.values(), b.values());
}

}  // namespace fairdiff
