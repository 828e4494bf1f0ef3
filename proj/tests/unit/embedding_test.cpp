// Copyright 2026 The fairdiff Authors
// SPDX-License-Identifier: Apache-2.0

#include <gtest/gtest.h>

#include <cmath>
#include <cstring>
#include <limits>
#include <random>

#include "fairdiff/calibration.hpp"
#include "fairdiff/embedding.hpp"
#include "test_util.hpp"

namespace fairdiff {
namespace {

using testing::error_code;

EmbeddingSet random_set(std::uint64_t seed, std::size_t n, std::size_t d) {
  std::mt19937_64 rng(seed);
  EmbeddingSet set(d);
  for (std::size_t i = 0; i < n; ++i) {
    auto v = testing::random_vector(rng, d);
    // Values representable in f32 so the round trip is exact. Narrowing
    // through a float buffer: g++ 11 at -O3 skips the tail of an in-place
    // double->float->double loop over short vectors.
    const std::vector<float> narrow(v.begin(), v.end());
    v.assign(narrow.begin(), narrow.end());
    set.add("prompt " + std::to_string(i), EmbeddingVector(std::move(v)));
  }
  return set;
}

void put_u32(std::string& bytes, std::size_t offset, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) bytes[offset + i] = static_cast<char>((v >> (8 * i)) & 0xff);
}

TEST(EmbeddingVector, RejectsShortOrNonFinite) {
  EXPECT_EQ(error_code([] { EmbeddingVector({1.0}); }), Errc::invalid_argument);
  EXPECT_EQ(error_code([] { EmbeddingVector({1.0, std::nan("")}); }), Errc::non_finite);
  EXPECT_EQ(error_code([] {
              EmbeddingVector({1.0, std::numeric_limits<double>::infinity()});
            }),
            Errc::non_finite);
}

TEST(EmbeddingSet, EnforcesDimAndUniqueLabels) {
  EmbeddingSet set(3);
  set.add("a", EmbeddingVector({1, 2, 3}));
  EXPECT_EQ(error_code([&] { set.add("b", EmbeddingVector({1, 2})); }), Errc::dimension_mismatch);
  EXPECT_EQ(error_code([&] { set.add("a", EmbeddingVector({4, 5, 6})); }), Errc::duplicate_label);
  EXPECT_EQ(set.find("a"), 0u);
  EXPECT_FALSE(set.find("zz").has_value());
}

TEST(AttributeSet, NeedsTwoUniqueNames) {
  EXPECT_ANY_THROW(AttributeSet({"male"}));
  EXPECT_ANY_THROW(AttributeSet({"male", "male"}));
  const auto g = AttributeSet::gender();
  EXPECT_EQ(g[0], "male");
  EXPECT_EQ(g.index_of("female"), 1u);
  EXPECT_FALSE(g.index_of("other").has_value());
}

TEST(Embd, SingleZeroVector) {
  EmbeddingSet set(4);
  set.add("zero", EmbeddingVector({0, 0, 0, 0}));
  const auto back = decode_embedding_set(encode_embedding_set(set));
  ASSERT_EQ(back.size(), 1u);
  EXPECT_EQ(back.dim(), 4u);
  for (double x : back.vector(0).values()) EXPECT_EQ(x, 0.0);
}

TEST(Embd, EmptySetIsHeaderOnly) {
  const auto bytes = encode_embedding_set(EmbeddingSet(8));
  EXPECT_EQ(bytes.size(), kEmbdHeaderBytes);
  EXPECT_EQ(bytes.substr(0, 4), "EMBD");
  const auto back = decode_embedding_set(bytes);
  EXPECT_EQ(back.size(), 0u);
  EXPECT_EQ(back.dim(), 8u);
}

TEST(Embd, PayloadSizeArithmetic) {
  EmbeddingSet set(3);
  set.add("x", EmbeddingVector({1, 2, 3}));
  set.add("yy", EmbeddingVector({4, 5, 6}));
  const auto bytes = encode_embedding_set(set);
  const std::size_t name_block = std::string("x\nyy\n").size();
  EXPECT_EQ(bytes.size(), kEmbdHeaderBytes + name_block + 2 * 3 * 4);
  // Header fields, little-endian.
  std::uint32_t fields[4];
  std::memcpy(fields, bytes.data() + 4, sizeof fields);
  EXPECT_EQ(fields[0], 1u);
  EXPECT_EQ(fields[1], 2u);
  EXPECT_EQ(fields[2], 3u);
  EXPECT_EQ(fields[3], name_block);
  EXPECT_EQ(bytes.substr(kEmbdHeaderBytes, name_block), "x\nyy\n");
}

TEST(Embd, RoundTripIsExactAndDeterministic) {
  for (std::uint64_t seed = 0; seed < 25; ++seed) {
    const auto set = random_set(seed, 7, 16);
    const auto bytes = encode_embedding_set(set);
    const auto back = decode_embedding_set(bytes);
    EXPECT_EQ(back, set);
    EXPECT_EQ(encode_embedding_set(back), bytes);
  }
}

TEST(Embd, FileRoundTrip) {
  testing::TempDir dir("embd");
  const auto set = random_set(99, 5, 6);
  save_embedding_set(set, dir / "a.embd");
  save_embedding_set(set, dir / "b.embd");
  EXPECT_EQ(read_file_bytes(dir / "a.embd"), read_file_bytes(dir / "b.embd"));
  EXPECT_EQ(load_embedding_set(dir / "a.embd"), set);
}

TEST(Embd, ValuesAreWidenedFromF32) {
  EmbeddingSet set(2);
  set.add("p", EmbeddingVector({0.1, -1.0 / 3.0}));
  const auto back = decode_embedding_set(encode_embedding_set(set));
  EXPECT_EQ(back.vector(0)[0], static_cast<double>(0.1f));
  EXPECT_EQ(back.vector(0)[1], static_cast<double>(static_cast<float>(-1.0 / 3.0)));
}

TEST(Embd, DistinctLoadErrors) {
  const auto good = encode_embedding_set(random_set(3, 2, 4));

  auto bad_magic = good;
  bad_magic.replace(0, 4, "XXXX");
  EXPECT_EQ(error_code([&] { (void)decode_embedding_set(bad_magic); }), Errc::bad_magic);

  auto bad_version = good;
  put_u32(bad_version, 4, 2);
  EXPECT_EQ(error_code([&] { (void)decode_embedding_set(bad_version); }),
            Errc::version_mismatch);

  EXPECT_EQ(error_code([&] { (void)decode_embedding_set(good.substr(0, good.size() - 1)); }),
            Errc::truncated);
  EXPECT_EQ(error_code([&] { (void)decode_embedding_set(good.substr(0, 10)); }), Errc::truncated);
  EXPECT_EQ(error_code([&] { (void)decode_embedding_set(good + "x"); }), Errc::trailing_bytes);

  // Claim three vectors while the name block holds two labels.
  EmbeddingSet three(4);
  for (int i = 0; i < 3; ++i) three.add(std::to_string(i), EmbeddingVector({1, 2, 3, 4}));
  auto mismatch = encode_embedding_set(three);
  // Replace "0\n1\n2\n" (6 bytes) by "0\n1 2\n": same length, two labels.
  mismatch.replace(kEmbdHeaderBytes, 6, "0\n1 2\n");
  EXPECT_EQ(error_code([&] { (void)decode_embedding_set(mismatch); }),
            Errc::label_count_mismatch);

  auto non_finite = good;
  const float nan = std::numeric_limits<float>::quiet_NaN();
  std::memcpy(non_finite.data() + non_finite.size() - 4, &nan, 4);
  EXPECT_EQ(error_code([&] { (void)decode_embedding_set(non_finite); }), Errc::non_finite);
}

TEST(Embd, MissingFileNamesThePath) {
  try {
    (void)load_embedding_set("/nonexistent/dir/pairs.embd");
    FAIL() << "expected an error";
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), Errc::io);
    EXPECT_NE(std::string(e.what()).find("/nonexistent/dir/pairs.embd"), std::string::npos);
  }
}

TEST(PromptPairs, ConsecutiveRowsFormPairs) {
  EmbeddingSet rows(2);
  rows.add("a/m", EmbeddingVector({1, 0}));
  rows.add("a/f", EmbeddingVector({0, 1}));
  rows.add("b/m", EmbeddingVector({2, 2}));
  rows.add("b/f", EmbeddingVector({1, 3}));
  const auto pairs = PromptPairSet::from_rows(rows);
  ASSERT_EQ(pairs.size(), 2u);
  EXPECT_EQ(pairs.difference(0), (std::vector<double>{1, -1}));
  EXPECT_EQ(pairs.difference(1), (std::vector<double>{1, -1}));

  rows.add("c/m", EmbeddingVector({0, 0}));
  EXPECT_EQ(error_code([&] { (void)PromptPairSet::from_rows(rows); }), Errc::invalid_argument);
  EXPECT_ANY_THROW((void)PromptPairSet::from_rows(EmbeddingSet(2)));
}

}  // namespace
}  // namespace fairdiff
