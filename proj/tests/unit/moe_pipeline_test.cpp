// Copyright 2026 The fairdiff Authors
// SPDX-License-Identifier: Apache-2.0

#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "fairdiff/moe_pipeline.hpp"
#include "fairdiff/rng.hpp"
#include "test_util.hpp"

namespace fairdiff {
namespace {

using testing::error_code;

constexpr DenoiserDims kDims{2, 4, 6, 5, 4, 2};

double row_sum(const ExpertWeights& w) {
  double s = 0.0;
  for (const auto& [id, v] : w) s += v;
  return s;
}

TEST(Routing, DefaultAllocations) {
  const auto t = RoutingTable::defaults();
  EXPECT_EQ(route(Verdict::male, t),
            (ExpertWeights{{"original", 0.4}, {"male", 0.1}, {"female", 0.5}}));
  EXPECT_EQ(route(Verdict::female, t),
            (ExpertWeights{{"original", 0.4}, {"male", 0.5}, {"female", 0.1}}));
  EXPECT_EQ(route(Verdict::none, t), (ExpertWeights{{"original", 1.0}}));
  for (Verdict v : {Verdict::male, Verdict::female, Verdict::none})
    EXPECT_NEAR(row_sum(route(v, t)), 1.0, 1e-12);
  // The opposite expert gets the largest non-original weight.
  EXPECT_GT(route(Verdict::male, t).at("female"), route(Verdict::male, t).at("male"));
  EXPECT_GT(route(Verdict::female, t).at("male"), route(Verdict::female, t).at("female"));
  EXPECT_NO_THROW(t.validate());
}

TEST(Routing, Validation) {
  auto t = RoutingTable::defaults();
  t.on_none = {{"original", 0.9}};
  EXPECT_EQ(error_code([&] { t.validate(); }), Errc::invalid_argument);
  t = RoutingTable::defaults();
  t.on_male_skew = {{"original", 1.1}, {"male", -0.1}};
  EXPECT_EQ(error_code([&] { t.validate(); }), Errc::invalid_argument);
  t = RoutingTable::defaults();
  t.on_female_skew = {{"original", 0.5}, {"nonbinary", 0.5}};
  EXPECT_ANY_THROW(t.validate());
}

TEST(Moe, BatchSeedIsXorOfLabelHash) {
  EXPECT_EQ(batch_seed(7, "nurse"), 7ull ^ fnv1a64("nurse"));
  EXPECT_NE(batch_seed(7, "nurse"), batch_seed(7, "ceo"));
}

struct Fixture {
  ToyDenoiser base = ToyDenoiser::initialize(kDims, 3);
  PromptTriple triple;
  CalibrationMatrix calibration = CalibrationMatrix(Matrix::identity(6), 0.0);
  NoiseSchedule schedule{10, 1e-4, 0.05};

  Fixture() {
    std::mt19937_64 rng(5);
    triple = {"nurse", testing::random_vector(rng, 6), testing::random_vector(rng, 6),
              testing::random_vector(rng, 6)};
    std::vector<PromptPairSet::Pair> pairs;
    for (int k = 0; k < 3; ++k)
      pairs.emplace_back(EmbeddingVector(testing::random_vector(rng, 6)),
                         EmbeddingVector(testing::random_vector(rng, 6)));
    calibration = build_calibration(PromptPairSet(6, pairs), 100.0);
  }

  [[nodiscard]] std::vector<std::vector<double>> base_samples(std::size_t n,
                                                              std::uint64_t seed) const {
    return sample(make_predictor(base, schedule, ToyDenoiser::base_only()), schedule,
                  ConditioningContext(triple.prompt), kDims.k, n, batch_seed(seed, triple.label));
  }
};

void randomise(BiasAdapter& a, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  for (Projection p : kProjections)
    for (auto& x : a.pair(p).up.values()) x = testing::random_vector(rng, 1, 0.5)[0];
}

TEST(Moe, OverrideNoneEqualsBaseSampling) {
  Fixture f;
  auto male = BiasAdapter::initialize(kDims.attention_dims(), 2, 1);
  auto female = BiasAdapter::initialize(kDims.attention_dims(), 2, 2);
  randomise(male, 1);
  randomise(female, 2);
  const ExpertRegistry registry(f.base, male, female);
  const auto result = moe_generate(registry, f.calibration, MoeSettings{}, f.triple, Verdict::none,
                                   f.schedule, 16, 11);
  EXPECT_EQ(result.decision.verdict, Verdict::none);
  EXPECT_EQ(result.weights, (ExpertWeights{{"original", 1.0}}));
  EXPECT_EQ(result.samples, f.base_samples(16, 11));
  // The skew is still computed and recorded for the audit trail.
  EXPECT_EQ(result.decision.skew, gender_skew(f.triple.prompt, f.triple.male, f.triple.female,
                                              f.calibration, SimilarityKind::pearson));
}

TEST(Moe, FreshExpertsEqualBaseSampling) {
  Fixture f;
  const ExpertRegistry registry(f.base, BiasAdapter::initialize(kDims.attention_dims(), 2, 1),
                                BiasAdapter::initialize(kDims.attention_dims(), 2, 2));
  const auto expected = f.base_samples(12, 3);
  for (Verdict v : {Verdict::male, Verdict::female}) {
    const auto result =
        moe_generate(registry, f.calibration, MoeSettings{}, f.triple, v, f.schedule, 12, 3);
    EXPECT_EQ(result.decision.verdict, v);
    ASSERT_EQ(result.samples.size(), expected.size());
    for (std::size_t i = 0; i < expected.size(); ++i)
      for (std::size_t j = 0; j < kDims.k; ++j)
        EXPECT_NEAR(result.samples[i][j], expected[i][j], 1e-10);
  }
}

TEST(Moe, GateDecidesWithoutOverride) {
  Fixture f;
  const ExpertRegistry registry(f.base, BiasAdapter::initialize(kDims.attention_dims(), 2, 1),
                                BiasAdapter::initialize(kDims.attention_dims(), 2, 2));
  MoeSettings settings;
  settings.threads = 3;
  const auto result =
      moe_generate(registry, f.calibration, settings, f.triple, std::nullopt, f.schedule, 4, 9);
  EXPECT_EQ(result.decision.verdict, classify(result.decision.skew, 0.0));
  EXPECT_EQ(result.weights, route(result.decision.verdict, settings.routing));
  EXPECT_EQ(result.decision.prompt_label, "nurse");
  EXPECT_EQ(result.samples.size(), 4u);
}

TEST(Moe, SpecialTokenChangesTheContext) {
  Fixture f;
  const ExpertRegistry registry(f.base, BiasAdapter::initialize(kDims.attention_dims(), 2, 1),
                                BiasAdapter::initialize(kDims.attention_dims(), 2, 2));
  MoeSettings with;
  with.special_token = special_token_embedding(6, 1);
  const auto a = moe_generate(registry, f.calibration, with, f.triple, Verdict::none, f.schedule, 4, 1);
  const auto b =
      moe_generate(registry, f.calibration, MoeSettings{}, f.triple, Verdict::none, f.schedule, 4, 1);
  EXPECT_NE(a.samples, b.samples);
}

TEST(Registry, RequiresCleanBaseAndMatchingIds) {
  Fixture f;
  auto dirty = f.base;
  dirty.attention().set_adapter("x", BiasAdapter::initialize(kDims.attention_dims(), 2, 1));
  EXPECT_ANY_THROW(ExpertRegistry(dirty, BiasAdapter::initialize(kDims.attention_dims(), 2, 1),
                                  BiasAdapter::initialize(kDims.attention_dims(), 2, 2)));

  testing::TempDir dir("registry");
  save_denoiser(f.base, dir / "base.tden");
  const auto a = BiasAdapter::initialize(kDims.attention_dims(), 2, 1);
  save_adapter(dir / "male.bias", "male", kDims.attention_dims(), a);
  save_adapter(dir / "female.bias", "female", kDims.attention_dims(), a);
  EXPECT_NO_THROW((void)ExpertRegistry::load(dir / "base.tden", dir / "male.bias", dir / "female.bias"));
  EXPECT_ANY_THROW(
      (void)ExpertRegistry::load(dir / "base.tden", dir / "female.bias", dir / "male.bias"));
  const AttentionDims other{6, 5, 4};
  save_adapter(dir / "wrong.bias", "male", other, BiasAdapter::initialize(other, 2, 1));
  EXPECT_ANY_THROW(
      (void)ExpertRegistry::load(dir / "base.tden", dir / "wrong.bias", dir / "female.bias"));
}

TEST(Moe, SamplesCsv) {
  const auto text = format_samples_csv({{"concept_00", 0, "male", Verdict::female},
                                        {"concept_00", 1, "unknown", Verdict::none}});
  EXPECT_EQ(text,
            "concept,sample_index,attribute,verdict\n"
            "concept_00,0,male,female\n"
            "concept_00,1,unknown,none\n");
}

}  // namespace
}  // namespace fairdiff
