// Copyright 2026 The fairdiff Authors
// SPDX-License-Identifier: Apache-2.0

#include <gtest/gtest.h>

#include <algorithm>
#include <json.hpp>
#include <random>

#include "fairdiff/fairness.hpp"
#include "oracles.hpp"
#include "test_util.hpp"

namespace fairdiff {
namespace {

using testing::error_code;

LabelTable table_from_counts(const std::vector<std::tuple<std::string, int, int, int>>& counts,
                             const AttributeSet& attrs = AttributeSet::gender()) {
  std::vector<LabelRow> rows;
  for (const auto& [occ, first, second, unknown] : counts) {
    int id = 0;
    auto add = [&](int n, const std::string& label) {
      for (int i = 0; i < n; ++i) rows.push_back({occ, std::to_string(id++), label});
    };
    add(first, attrs[0]);
    add(second, attrs[1]);
    add(unknown, "unknown");
  }
  return LabelTable(std::move(rows), attrs);
}

TEST(Fairness, Anchors) {
  auto all_male = fairness_score(table_from_counts({{"a", 10, 0, 0}, {"b", 3, 0, 2}}), "male");
  EXPECT_EQ(all_male.score, 0.5);
  EXPECT_EQ(all_male.std, 0.0);
  auto balanced = fairness_score(table_from_counts({{"a", 5, 5, 0}, {"b", 1, 1, 7}}), "male");
  EXPECT_EQ(balanced.score, 0.0);
  EXPECT_EQ(balanced.std, 0.0);
  auto mixed = fairness_score(table_from_counts({{"a", 7, 3, 0}, {"b", 5, 5, 0}}), "male");
  EXPECT_DOUBLE_EQ(mixed.score, 0.1);
  EXPECT_DOUBLE_EQ(mixed.std, 0.1);
  ASSERT_EQ(mixed.per_occupation.size(), 2u);
  EXPECT_EQ(mixed.per_occupation[0].counts, (std::vector<std::size_t>{7, 3}));
}

TEST(Fairness, FixtureAllMaleScoresHalf) {
  const auto table = load_label_csv(testing::fixture("all_male_labels.csv"), AttributeSet::gender());
  const auto report = fairness_score(table, "male");
  EXPECT_EQ(report.score, 0.5);
  EXPECT_EQ(report.std, 0.0);
}

TEST(Fairness, MatchesBruteForceRecount) {
  std::mt19937_64 rng(31);
  const char* labels[] = {"male", "female", "unknown"};
  for (int trial = 0; trial < 50; ++trial) {
    std::vector<LabelRow> rows;
    std::vector<std::pair<std::string, std::string>> plain;
    const std::size_t occupations = testing::uniform_size(rng, 1, 30);
    for (std::size_t o = 0; o < occupations; ++o) {
      const std::string occ = "occ_" + std::to_string(testing::uniform_size(rng, 0, 1000)) + "_" +
                              std::to_string(o);
      const std::size_t n = testing::uniform_size(rng, 1, 60);
      const double p = std::uniform_real_distribution<double>(0, 1)(rng);
      for (std::size_t i = 0; i < n; ++i) {
        const double u = std::uniform_real_distribution<double>(0, 1)(rng);
        std::string label = u < 0.1 ? labels[2] : (u < 0.1 + 0.9 * p ? labels[0] : labels[1]);
        if (i == 0) label = labels[0];  // at least one known row
        rows.push_back({occ, std::to_string(i), label});
        plain.emplace_back(occ, label);
      }
    }
    // Shuffle row order; the report must not depend on it.
    std::shuffle(rows.begin(), rows.end(), rng);
    const LabelTable table(rows, AttributeSet::gender());
    const auto expected = oracle::fairness_recount(plain, "male");
    for (std::size_t threads : {1, 4}) {
      const auto report = fairness_score(table, "male", threads);
      EXPECT_EQ(report.score, expected.score);
      EXPECT_EQ(report.std, expected.std);
      ASSERT_EQ(report.per_occupation.size(), expected.deviation.size());
      for (const auto& occ : report.per_occupation)
        EXPECT_EQ(occ.deviation, expected.deviation.at(occ.occupation));
    }
    // Binary symmetry.
    const auto female = fairness_score(table, "female");
    EXPECT_EQ(female.score, expected.score);
  }
}

TEST(Fairness, DuplicatingRowsKeepsScore) {
  const auto once = fairness_score(table_from_counts({{"a", 7, 2, 1}, {"b", 1, 4, 0}}), "male");
  const auto twice = fairness_score(table_from_counts({{"a", 14, 4, 2}, {"b", 2, 8, 0}}), "male");
  EXPECT_EQ(once.score, twice.score);
  EXPECT_EQ(once.std, twice.std);
}

TEST(Fairness, MoreThanTwoAttributesAveragesDeviations) {
  const AttributeSet three({"a", "b", "c"});
  std::vector<LabelRow> rows{{"x", "1", "a"}, {"x", "2", "a"}, {"x", "3", "b"}, {"x", "4", "c"}};
  const auto report = fairness_score(LabelTable(rows, three), "a");
  // |2/4 - 1/3| + |1/4 - 1/3| * 2, averaged over three attributes.
  EXPECT_NEAR(report.score, (1.0 / 6 + 1.0 / 12 + 1.0 / 12) / 3, 1e-15);
  EXPECT_EQ(report.per_occupation[0].attribute_deviation.size(), 3u);
}

TEST(Fairness, Errors) {
  try {
    (void)fairness_score(table_from_counts({{"a", 1, 0, 0}, {"b", 0, 0, 3}, {"c", 0, 0, 1}}),
                         "male");
    FAIL() << "expected MissingLabelsError";
  } catch (const MissingLabelsError& e) {
    EXPECT_EQ(e.occupations(), (std::vector<std::string>{"b", "c"}));
  }
  EXPECT_ANY_THROW((void)fairness_score(table_from_counts({{"a", 1, 0, 0}}), "other"));
  EXPECT_EQ(error_code([] {
              LabelTable({{"a", "1", "male"}, {"a", "1", "female"}}, AttributeSet::gender());
            }),
            Errc::duplicate_label);
  EXPECT_EQ(error_code([] { LabelTable({{"a", "1", "robot"}}, AttributeSet::gender()); }),
            Errc::unknown_label);
}

TEST(Fairness, CsvAndReports) {
  const auto table = table_from_counts({{"b", 7, 3, 1}, {"a", 5, 5, 0}});
  const auto back = parse_label_csv(format_label_csv(table), AttributeSet::gender());
  EXPECT_EQ(back.rows().size(), table.rows().size());
  EXPECT_ANY_THROW((void)parse_label_csv("occupation,label\na,male\n", AttributeSet::gender()));

  const auto report = fairness_score(table, "male");
  const auto j = nlohmann::json::parse(format_fairness_json(report, AttributeSet::gender()));
  EXPECT_EQ(j["attribute"], "male");
  EXPECT_DOUBLE_EQ(j["score"].get<double>(), 0.1);
  ASSERT_EQ(j["per_occupation"].size(), 2u);
  EXPECT_EQ(j["per_occupation"][0]["occupation"], "a");
  EXPECT_EQ(j["per_occupation"][1]["counts"]["male"], 7);
  EXPECT_EQ(j["per_occupation"][1]["unknown"], 1);
  const auto text = format_fairness_table(report, AttributeSet::gender());
  EXPECT_NE(text.find("score"), std::string::npos);
}

TEST(LinearScore, Formula) {
  const std::vector<double> zero(4, 0.0), f{1, 2, 3, 4}, onehot{0, 0, 1, 0};
  EXPECT_EQ(linear_score(zero, 5.0, f), 5.0);
  EXPECT_EQ(linear_score(onehot, 1.0, f), 4.0);
  std::mt19937_64 rng(3);
  const auto w = testing::random_vector(rng, 33), x = testing::random_vector(rng, 33);
  double s = -0.5;
  for (std::size_t i = 0; i < 33; ++i) s += w[i] * x[i];
  EXPECT_NEAR(linear_score(w, -0.5, x), s, 1e-13);
  EXPECT_ANY_THROW((void)linear_score(w, 0.0, f));
}

}  // namespace
}  // namespace fairdiff
