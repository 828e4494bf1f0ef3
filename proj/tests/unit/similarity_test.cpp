// Copyright 2026 The fairdiff Authors
// SPDX-License-Identifier: Apache-2.0

#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "fairdiff/similarity.hpp"
#include "oracles.hpp"
#include "test_util.hpp"

namespace fairdiff {
namespace {

using testing::error_code;
using V = std::vector<double>;

TEST(Pearson, Anchors) {
  EXPECT_DOUBLE_EQ(pearson_similarity(V{1, 2, 3}, V{1, 2, 3}), 1.0);
  EXPECT_DOUBLE_EQ(pearson_similarity(V{1, 2, 3}, V{-1, -2, -3}), -1.0);
  // Means 2.5, deviations (-1.5,-.5,.5,1.5) and (-.5,-1.5,1.5,.5): sum of
  // products 3, sums of squares 5.
  EXPECT_NEAR(pearson_similarity(V{1, 2, 3, 4}, V{2, 1, 4, 3}), 3.0 / 5.0, 1e-15);
  EXPECT_NEAR(pearson_similarity(V{1, 2, 3, 4}, V{2, 1, 4, 3}),
              oracle::pearson({1, 2, 3, 4}, {2, 1, 4, 3}), 1e-15);
}

TEST(Pearson, ZeroVarianceIsDegenerate) {
  EXPECT_EQ(error_code([] { (void)pearson_similarity(V{2, 2, 2}, V{1, 2, 3}); }),
            Errc::degenerate_similarity);
  EXPECT_EQ(error_code([] { (void)pearson_similarity(V{1, 2}, V{1, 2, 3}); }),
            Errc::dimension_mismatch);
}

TEST(Pearson, SymmetricAndAffineInvariant) {
  std::mt19937_64 rng(5);
  for (int trial = 0; trial < 200; ++trial) {
    const std::size_t n = testing::uniform_size(rng, 2, 40);
    const auto a = testing::random_vector(rng, n);
    const auto b = testing::random_vector(rng, n);
    const double s = pearson_similarity(a, b);
    EXPECT_NEAR(s, oracle::pearson(a, b), 1e-12);
    EXPECT_NEAR(s, pearson_similarity(b, a), 1e-14);
    EXPECT_LE(std::abs(s), 1.0 + 1e-15);
    const double alpha = std::exp(testing::random_vector(rng, 1)[0]);
    const double beta = 3.0 * testing::random_vector(rng, 1)[0];
    auto shifted = a;
    for (auto& x : shifted) x = alpha * x + beta;
    EXPECT_NEAR(pearson_similarity(shifted, b), s, 1e-12);
  }
}

TEST(Similarity, KindAnchors) {
  EXPECT_DOUBLE_EQ(similarity(SimilarityKind::cosine, V{3, -1, 2}, V{3, -1, 2}), 1.0);
  EXPECT_DOUBLE_EQ(similarity(SimilarityKind::neg_euclidean, V{0, 0}, V{3, 4}), -5.0);
  EXPECT_DOUBLE_EQ(similarity(SimilarityKind::neg_manhattan, V{0, 0}, V{3, -4}), -7.0);
  EXPECT_EQ(similarity(SimilarityKind::neg_euclidean, V{1, 2}, V{1, 2}), 0.0);
  EXPECT_EQ(similarity(SimilarityKind::jaccard, V{1, 2}, V{1, 2}), 1.0);
}

TEST(Similarity, MatchesOracles) {
  std::mt19937_64 rng(17);
  for (int trial = 0; trial < 200; ++trial) {
    const std::size_t n = testing::uniform_size(rng, 2, 32);
    const auto a = testing::random_vector(rng, n);
    const auto b = testing::random_vector(rng, n);
    EXPECT_NEAR(similarity(SimilarityKind::cosine, a, b), oracle::cosine(a, b), 1e-12);
    EXPECT_NEAR(similarity(SimilarityKind::jaccard, a, b), oracle::shifted_jaccard(a, b), 1e-12);
    double e = 0.0, m = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      e += (a[i] - b[i]) * (a[i] - b[i]);
      m += std::abs(a[i] - b[i]);
    }
    EXPECT_NEAR(similarity(SimilarityKind::neg_euclidean, a, b), -std::sqrt(e), 1e-12);
    EXPECT_NEAR(similarity(SimilarityKind::neg_manhattan, a, b), -m, 1e-12);
    EXPECT_LT(similarity(SimilarityKind::neg_euclidean, a, b), 0.0);
    EXPECT_LT(similarity(SimilarityKind::neg_manhattan, a, b), 0.0);
  }
}

TEST(Similarity, DegenerateInputs) {
  EXPECT_EQ(error_code([] { (void)similarity(SimilarityKind::cosine, V{0, 0}, V{1, 2}); }),
            Errc::degenerate_similarity);
  EXPECT_EQ(error_code([] { (void)similarity(SimilarityKind::jaccard, V{5, 5}, V{5, 5}); }),
            Errc::degenerate_similarity);
}

TEST(Similarity, NamesRoundTrip) {
  for (auto kind : {SimilarityKind::pearson, SimilarityKind::cosine, SimilarityKind::neg_euclidean,
                    SimilarityKind::neg_manhattan, SimilarityKind::jaccard}) {
    EXPECT_EQ(parse_similarity(similarity_name(kind)), kind);
  }
  EXPECT_FALSE(parse_similarity("spearman").has_value());
}

}  // namespace
}  // namespace fairdiff
