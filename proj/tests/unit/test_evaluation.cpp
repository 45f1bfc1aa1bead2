// Copyright 2026 The floodrag Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.


#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "floodrag/evaluation.hpp"
#include "test_support.hpp"

namespace floodrag::eval {
namespace {

std::vector<PdeCategory> labels(std::initializer_list<int> v) {
  std::vector<PdeCategory> out;
  for (int x : v) out.push_back(category_from_int(x));
  return out;
}

prompt::Trajectory appendix_c() {
  return *prompt::parse_trajectory(testing::read_fixture("appendix_c_trajectory.txt")).value;
}

TEST(SeverityScore, Examples) {
  EXPECT_DOUBLE_EQ(severity_score(labels({0, 1, 2}), labels({0, 1, 2})), 1.0);
  EXPECT_DOUBLE_EQ(severity_score(labels({0}), labels({2})), 0.0);
  EXPECT_DOUBLE_EQ(severity_score(labels({0, 1, 2, 2}), labels({1, 1, 1, 2})), 0.75);
  EXPECT_THROW(severity_score({}, {}), std::invalid_argument);
  EXPECT_THROW(severity_score(labels({0}), labels({0, 1})), std::invalid_argument);
}

TEST(ClassificationMetrics, HandConfusion) {
  const auto m = classification_metrics(labels({0, 0, 1, 1, 2, 2}), labels({0, 1, 1, 1, 1, 2}));
  EXPECT_NEAR(m.overall_accuracy, 4.0 / 6.0, 1e-15);
  EXPECT_NEAR(*m.recall_2, 0.5, 1e-15);
  for (double f : m.per_class_f1) EXPECT_NEAR(f, 2.0 / 3.0, 1e-15);
  EXPECT_NEAR(m.macro_f1, 2.0 / 3.0, 1e-15);
  EXPECT_NEAR(*m.damage_class_accuracy, 0.75, 1e-15);
  EXPECT_EQ(m.confusion[0][1], 1u);
  EXPECT_EQ(m.confusion[2][1], 1u);
}

TEST(ClassificationMetrics, PerfectAndAbsent) {
  const auto m = classification_metrics(labels({0, 1, 2}), labels({0, 1, 2}));
  EXPECT_DOUBLE_EQ(m.macro_f1, 1.0);
  EXPECT_DOUBLE_EQ(*m.recall_2, 1.0);
  const auto z = classification_metrics(labels({0, 0}), labels({0, 1}));
  EXPECT_FALSE(z.damage_class_accuracy.has_value());
  EXPECT_FALSE(z.recall_2.has_value());
  // Class 2 never occurs in either vector: its F1 is 0 by convention.
  EXPECT_DOUBLE_EQ(z.per_class_f1[2], 0.0);
}

// Naive recount of every metric, written independently of the library.
struct OracleMetrics {
  double acc, macro_f1, sev;
  std::optional<double> dca, r2;
};

OracleMetrics oracle(const std::vector<int>& y, const std::vector<int>& p) {
  const double n = static_cast<double>(y.size());
  double correct = 0, sev = 0, dmg_n = 0, dmg_ok = 0;
  for (std::size_t i = 0; i < y.size(); ++i) {
    correct += y[i] == p[i];
    sev += 1.0 - std::abs(y[i] - p[i]) / 2.0;
    if (y[i] >= 1) {
      ++dmg_n;
      dmg_ok += y[i] == p[i];
    }
  }
  double f1_sum = 0;
  std::optional<double> r2;
  for (int c = 0; c < 3; ++c) {
    double tp = 0, fp = 0, fn = 0;
    for (std::size_t i = 0; i < y.size(); ++i) {
      if (p[i] == c && y[i] == c) ++tp;
      if (p[i] == c && y[i] != c) ++fp;
      if (p[i] != c && y[i] == c) ++fn;
    }
    f1_sum += (2 * tp + fp + fn) == 0 ? 0.0 : 2 * tp / (2 * tp + fp + fn);
    if (c == 2 && tp + fn > 0) r2 = tp / (tp + fn);
  }
  return {correct / n, f1_sum / 3.0, sev / n, dmg_n > 0 ? std::optional(dmg_ok / dmg_n) : std::nullopt, r2};
}

TEST(ClassificationMetrics, MatchesRecountOracle) {
  std::mt19937_64 rng(99);
  for (int trial = 0; trial < 1000; ++trial) {
    const std::size_t n = 1 + rng() % 40;
    std::vector<int> y(n), p(n);
    std::vector<PdeCategory> yc, pc;
    for (std::size_t i = 0; i < n; ++i) {
      y[i] = static_cast<int>(rng() % 3);
      p[i] = static_cast<int>(rng() % 3);
      yc.push_back(category_from_int(y[i]));
      pc.push_back(category_from_int(p[i]));
    }
    const auto m = classification_metrics(yc, pc);
    const auto o = oracle(y, p);
    ASSERT_NEAR(m.overall_accuracy, o.acc, 1e-12);
    ASSERT_NEAR(m.macro_f1, o.macro_f1, 1e-12);
    ASSERT_NEAR(m.severity_score, o.sev, 1e-12);
    ASSERT_NEAR(severity_score(yc, pc), o.sev, 1e-12);
    ASSERT_EQ(m.damage_class_accuracy.has_value(), o.dca.has_value());
    if (o.dca) ASSERT_NEAR(*m.damage_class_accuracy, *o.dca, 1e-12);
    ASSERT_EQ(m.recall_2.has_value(), o.r2.has_value());
    if (o.r2) ASSERT_NEAR(*m.recall_2, *o.r2, 1e-12);
  }
}

TEST(Lra, Examples) {
  const auto t = appendix_c();
  EXPECT_EQ(lra(t, PdeCategory::kMedium), 1);
  EXPECT_EQ(lra(t, PdeCategory::kHigh), 0);
  prompt::Trajectory claims2{"Strong signals. Based on these factors, it is reasonable to claim PDE_category is 2.",
                             PdeCategory::kMedium, ""};
  EXPECT_EQ(lra(claims2, PdeCategory::kMedium), 0);
  prompt::Trajectory bare{"Nothing to extract here.", PdeCategory::kHigh, ""};
  EXPECT_FALSE(implied_label(bare.think).has_value());
  EXPECT_EQ(lra(bare, PdeCategory::kHigh), 1);
  prompt::Trajectory occ0{"Given the high ground, occurrence resolves to 0.", PdeCategory::kLow, ""};
  EXPECT_EQ(implied_label(occ0.think), PdeCategory::kLow);
}

TEST(Sfc, Examples) {
  const auto& dict = VariableDictionary::standard();
  const std::set<std::string> salient = {"Poly_num", "Popu_num", "fndn", "roughness", "elevation"};
  EXPECT_NEAR(sfc(appendix_c().think, salient, dict), 0.4, 1e-15);
  EXPECT_DOUBLE_EQ(sfc("", salient, dict), 0.0);
  EXPECT_DOUBLE_EQ(sfc("buildings, population, foundation, roughness and elevation", salient, dict), 1.0);
  EXPECT_THROW(sfc("x", {}, dict), std::invalid_argument);
}

TEST(Fdc, Examples) {
  const auto& dict = VariableDictionary::standard();
  std::vector<Record> kb;
  for (int i = 0; i < 9; ++i) {
    Record r;
    r.row_id = i;
    r.predictors = {{"hand", i * 1.0}, {"elevation", i * 1.0}};
    kb.push_back(r);
  }
  const auto t = compute_terciles(kb, {"hand", "elevation"});
  EXPECT_NEAR(t.at("hand").lower, 8.0 / 3.0, 1e-12);
  EXPECT_NEAR(t.at("hand").upper, 16.0 / 3.0, 1e-12);
  Record target;
  target.predictors = {{"hand", 8.0}, {"elevation", 8.0}};
  EXPECT_DOUBLE_EQ(fdc("No directional statements at all.", target, dict, t).score, 1.0);
  const auto high = fdc("HAND is very high here.", target, dict, t);
  ASSERT_EQ(high.mentions.size(), 1u);
  EXPECT_TRUE(high.mentions[0].consistent);
  EXPECT_DOUBLE_EQ(high.score, 1.0);
  const auto low = fdc("The parcel has low elevation.", target, dict, t);
  ASSERT_EQ(low.mentions.size(), 1u);
  EXPECT_FALSE(low.mentions[0].consistent);
  EXPECT_DOUBLE_EQ(low.score, 0.0);
}

kb::FreeShotLibrary pas_library() {
  kb::FreeShotLibrary lib;
  lib.scope = "global";
  lib.cue_weights = {{"FAR", 0.4}, {"impervious", 0.3}, {"elevation", 0.2}, {"age", 0.1}};
  kb::ClassStats cs{PdeCategory::kMedium, {}};
  for (const auto& [k, w] : lib.cue_weights) cs.per_feature[k] = {0.0, 1.0, 10};
  lib.stats[PdeCategory::kMedium] = cs;
  kb::FreeShot near;
  near.row_id = 1;
  near.level = PdeCategory::kMedium;
  near.features = {{"FAR", 0.1}, {"impervious", 10.0}, {"elevation", 5.0}, {"age", 40.0}};
  near.per_feature_contrib = {{"FAR", 0.429}, {"impervious", 0.386}, {"elevation", 0.331}, {"age", 0.1}};
  kb::FreeShot far = near;
  far.row_id = 2;
  far.features = {{"FAR", 9.0}, {"impervious", 90.0}, {"elevation", 50.0}, {"age", 1.0}};
  far.per_feature_contrib = {{"age", 0.9}, {"FAR", 0.5}, {"impervious", 0.4}, {"elevation", 0.1}};
  lib.prototypes[PdeCategory::kMedium] = {far, near};
  return lib;
}

TEST(Pas, Examples) {
  const auto& dict = VariableDictionary::standard();
  const auto lib = pas_library();
  Record r;
  r.predictors = {{"FAR", 0.1}, {"impervious", 11.0}, {"elevation", 5.0}, {"age", 40.0}};
  EXPECT_DOUBLE_EQ(*pas("FAR, impervious share and elevation matter.", PdeCategory::kMedium, lib, r, dict), 1.0);
  EXPECT_DOUBLE_EQ(*pas("Nothing relevant.", PdeCategory::kMedium, lib, r, dict), 0.0);
  EXPECT_NEAR(*pas("Only the elevation matters.", PdeCategory::kMedium, lib, r, dict), 1.0 / 3.0, 1e-15);
  EXPECT_FALSE(pas("x", PdeCategory::kHigh, lib, r, dict).has_value());
}

TEST(Bts, Examples) {
  const auto& dict = VariableDictionary::standard();
  const auto line = testing::read_fixture("appendix_e_prediction.jsonl");
  const auto pred = prompt::parse_prediction(line);
  ASSERT_TRUE(pred.ok());
  EXPECT_TRUE(boundary_tradeoff(pred.value->trajectory.think, dict).passes());
  EXPECT_FALSE(boundary_tradeoff("Water was deep and indoor damage likely.", dict).passes());

  const std::vector<double> d = {0.5, 0.01, 0.9, 0.02, 0.3, 0.4, 0.6, 0.7, 0.8, 0.05, 1.0, 1.1,
                                 1.2, 1.3, 1.4, 1.5, 1.6, 1.7, 1.8, 1.9};
  EXPECT_EQ(boundary_subset(d, 0.1), (std::vector<std::size_t>{1, 3}));
  std::vector<bool> all(d.size(), true), none(d.size(), false);
  EXPECT_DOUBLE_EQ(*bts(d, all), 1.0);
  EXPECT_DOUBLE_EQ(*bts(d, none), 0.0);
  std::vector<bool> one = none;
  one[3] = true;
  EXPECT_DOUBLE_EQ(*bts(d, one), 0.5);
  EXPECT_FALSE(bts({}, {}).has_value());
  EXPECT_THROW(bts(d, {true}), std::invalid_argument);
}

TEST(Efficiency, TableValues) {
  EXPECT_NEAR(efficiency(0.8192, 0.010), 81.92, 1e-9);
  EXPECT_NEAR(efficiency(0.7873, 0.199), 3.956, 1e-3);
  EXPECT_DOUBLE_EQ(efficiency(0.5, 0.5), 1.0);
  EXPECT_THROW(efficiency(0.5, 0.0), std::invalid_argument);
  EXPECT_THROW(efficiency(0.5, -1.0), std::invalid_argument);
}

TEST(Reporting, TableAndAblationNames) {
  EXPECT_EQ(format_metric(std::nullopt), "-");
  EXPECT_EQ(format_metric(0.5), "0.5000");
  const auto t = format_table({"a", "bb"}, {{"1", "2"}, {"333", "4"}});
  EXPECT_NE(t.find("333"), std::string::npos);
  for (auto c : kAllAblations) EXPECT_EQ(ablation_from_name(ablation_name(c)), c);
  EXPECT_FALSE(uses_neighbors(AblationConfig::kI));
  EXPECT_TRUE(uses_neighbors(AblationConfig::kII));
  EXPECT_FALSE(uses_free_shots(AblationConfig::kII));
  EXPECT_TRUE(uses_free_shots(AblationConfig::kIII));
  EXPECT_FALSE(uses_post_check(AblationConfig::kIII));
  EXPECT_TRUE(uses_post_check(AblationConfig::kIV));
}

}  // namespace
}  // namespace floodrag::eval
