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

#include "floodrag/knowledge_base.hpp"
#include "freeshot_oracle.hpp"
#include "test_support.hpp"

namespace floodrag::kb {
namespace {

KbEntry entry(std::int64_t id, int label, FeatureMap x, std::string huc = "120401020103") {
  KbEntry e;
  e.record.row_id = id;
  e.record.label = category_from_int(label);
  e.record.predictors = std::move(x);
  e.record.huc12 = std::move(huc);
  e.text_mode = "text " + std::to_string(id);
  e.trajectory.think = "think";
  e.trajectory.answer = category_from_int(label);
  return e;
}

std::vector<const KbEntry*> ptrs(const std::vector<KbEntry>& v) {
  std::vector<const KbEntry*> out;
  for (const auto& e : v) out.push_back(&e);
  return out;
}

TEST(MakeEntry, RequiresCleanAudit) {
  const auto record =
      load_dataset(testing::fixture("appendix_b_record.jsonl"), VariableDictionary::standard()).records.at(0);
  const auto t = *prompt::parse_trajectory(testing::read_fixture("appendix_c_trajectory.txt")).value;
  const auto e = make_entry(record, "tm", t);
  EXPECT_EQ(e.label(), PdeCategory::kMedium);
  auto wrong = record;
  wrong.label = PdeCategory::kHigh;
  EXPECT_THROW(make_entry(wrong, "tm", t), Error);
  auto unlabeled = record;
  unlabeled.label.reset();
  EXPECT_THROW(make_entry(unlabeled, "tm", t), Error);

  const auto j = entry_to_json(e, VariableDictionary::standard());
  EXPECT_EQ(entry_to_json(entry_from_json(j, VariableDictionary::standard()), VariableDictionary::standard()).dump(),
            j.dump());
}

TEST(StandardizedDistance, Examples) {
  ClassStats cs{PdeCategory::kLow, {{"age", {3.0, 1.0, 4}}, {"hand", {2.0, 0.0, 4}}}};
  auto z = standardized_distance({{"age", 5.0}, {"hand", 2.0}}, cs);
  EXPECT_NEAR(z.at("age"), 2.0, 1e-5);
  EXPECT_DOUBLE_EQ(z.at("hand"), 0.0);
  z = standardized_distance({{"age", 3.0}, {"hand", 2.0}}, cs);
  EXPECT_DOUBLE_EQ(z.at("age"), 0.0);
  EXPECT_THROW(standardized_distance({{"FAR", 1.0}}, cs), Error);
}

TEST(WeightedZDistance, Examples) {
  EXPECT_NEAR(weighted_zdistance({{"A", 1.0}, {"B", 2.0}}, {{"A", 0.6}, {"B", 0.4}}), 1.4, 1e-15);
  EXPECT_DOUBLE_EQ(weighted_zdistance({{"A", 0.0}, {"B", 0.0}}, {{"A", 0.6}, {"B", 0.4}}), 0.0);
  EXPECT_THROW(weighted_zdistance({{"C", 1.0}}, {{"A", 1.0}}), Error);
}

TEST(BoundaryMargins, PaperExamples) {
  // d values injected via single-feature stats: z = |x - mu| / (sigma + eps).
  auto margins = [](double d0, double d1, double d2) {
    StatsByLevel s;
    s[PdeCategory::kLow] = {PdeCategory::kLow, {{"age", {0.0, 1.0 - 1e-6, 1}}}};
    s[PdeCategory::kMedium] = {PdeCategory::kMedium, {{"age", {0.0, 1.0 - 1e-6, 1}}}};
    s[PdeCategory::kHigh] = {PdeCategory::kHigh, {{"age", {0.0, 1.0 - 1e-6, 1}}}};
    s[PdeCategory::kLow].per_feature["age"].mu = -d0;
    s[PdeCategory::kMedium].per_feature["age"].mu = -d1;
    s[PdeCategory::kHigh].per_feature["age"].mu = -d2;
    return boundary_margins({{"age", 0.0}}, s, {{"age", 1.0}});
  };
  auto m = margins(0.4455, 0.4461, 0.9);
  EXPECT_NEAR(m.m_occ, 0.0006, 1e-12);
  m = margins(0.5, 0.8826, 0.8812);
  EXPECT_NEAR(m.m_sev, 0.0014, 1e-12);
  EXPECT_NEAR(m.m_sev, 0.0013, 2e-4);
  m = margins(0.3, 0.3, 0.3);
  EXPECT_DOUBLE_EQ(m.m_occ, 0.0);
  EXPECT_DOUBLE_EQ(m.m_sev, 0.0);
  EXPECT_THROW(boundary_margins({{"age", 0.0}}, {}, {{"age", 1.0}}), Error);
}

TEST(SelectPrototypes, TwoEntriesAreForced) {
  std::vector<KbEntry> v = {entry(1, 1, {{"age", 0.0}}), entry(2, 1, {{"age", 100.0}}), entry(3, 0, {{"age", 5.0}})};
  const Weights w = {{"age", 1.0}};
  const auto stats = compute_class_stats(ptrs(v), {"age"});
  const auto p = select_prototypes(ptrs(v), stats, w);
  ASSERT_EQ(p.at(PdeCategory::kMedium).size(), 2u);
  EXPECT_EQ(p.at(PdeCategory::kLow).size(), 1u);
  EXPECT_EQ(p.count(PdeCategory::kHigh), 0u);
}

TEST(SelectPrototypes, EntryAtClassMeanComesFirst) {
  std::vector<KbEntry> v = {entry(1, 2, {{"age", 0.0}}), entry(2, 2, {{"age", 5.0}}), entry(3, 2, {{"age", 10.0}}),
                            entry(4, 2, {{"age", 6.0}})};
  const Weights w = {{"age", 1.0}};
  const auto p = select_prototypes(ptrs(v), compute_class_stats(ptrs(v), {"age"}), w);
  // mean is 5.25: row 2 (|5-5.25|) then row 4.
  EXPECT_EQ(p.at(PdeCategory::kHigh)[0].row_id, 2);
  EXPECT_EQ(p.at(PdeCategory::kHigh)[1].row_id, 4);

  std::vector<KbEntry> exact = {entry(1, 2, {{"age", 0.0}}), entry(2, 2, {{"age", 4.0}}), entry(3, 2, {{"age", 2.0}})};
  const auto q = select_prototypes(ptrs(exact), compute_class_stats(ptrs(exact), {"age"}), w);
  EXPECT_EQ(q.at(PdeCategory::kHigh)[0].row_id, 3);
  EXPECT_DOUBLE_EQ(*q.at(PdeCategory::kHigh)[0].weighted_zdist, 0.0);
  EXPECT_EQ(q.at(PdeCategory::kHigh)[0].why_selected.rfind(
                "Selected as class 2 prototype by minimal weighted z-distance; d=0.0000. Top contributors: age", 0),
            0u);
}

TEST(FreeShots, MatchExhaustiveOracle) {
  std::mt19937_64 rng(21);
  const Weights w = {{"FAR", 0.2}, {"age", 0.5}, {"hand", 0.3}};
  for (int trial = 0; trial < 30; ++trial) {
    const auto scope = testing::random_scope(rng, 6 + rng() % 60);
    const auto lib = build_library("s", ptrs(scope), w);
    EXPECT_TRUE(testing::library_selection(lib) == testing::oracle_select(scope, w, kDefaultEpsilon)) << trial;
  }
}

TEST(HardExamples, SingleClassScopeHasNone) {
  std::vector<KbEntry> v = {entry(1, 1, {{"age", 1.0}}), entry(2, 1, {{"age", 2.0}})};
  const auto lib = build_library("s", ptrs(v), {{"age", 1.0}});
  EXPECT_FALSE(lib.hard.occurrence_for_0 || lib.hard.occurrence_for_1 || lib.hard.severity_for_1 ||
               lib.hard.severity_for_2);
  EXPECT_EQ(lib.absent().size(), 6u);
}

TEST(HardExamples, WhySelectedFormat) {
  std::mt19937_64 rng(4);
  const auto scope = testing::random_scope(rng, 40);
  const auto lib = build_library("global", ptrs(scope), {{"age", 0.5}, {"hand", 0.5}});
  ASSERT_TRUE(lib.hard.occurrence_for_0.has_value());
  EXPECT_EQ(lib.hard.occurrence_for_0->why_selected.rfind("Closest to 0/1 occurrence boundary (margin=", 0), 0u);
  ASSERT_TRUE(lib.hard.severity_for_2.has_value());
  EXPECT_EQ(lib.hard.severity_for_2->why_selected.rfind("Closest to 1/2 severity boundary (margin=", 0), 0u);
  EXPECT_NE(lib.hard.severity_for_2->why_selected.find("; d1="), std::string::npos);
}

TEST(BuildLibraries, ScopeThreshold) {
  std::vector<KbEntry> v;
  for (int i = 0; i < 99; ++i) v.push_back(entry(i, i % 3, {{"age", i * 1.0}}, "120401020210"));
  for (int i = 0; i < 150; ++i) v.push_back(entry(1000 + i, i % 3, {{"age", i * 2.0}}, "120401020103"));
  divergence::DivergenceProfile profile;
  profile.cue_weights = {{"age", 1.0}};
  const auto libs = build_libraries(v, profile);
  EXPECT_EQ(libs.size(), 2u);
  EXPECT_TRUE(libs.count("global"));
  EXPECT_TRUE(libs.count("120401020103"));
  EXPECT_FALSE(libs.count("120401020210"));
  EXPECT_TRUE(libs.at("120401020103").absent().empty());
  EXPECT_TRUE(libs.at("global").absent().empty());
  EXPECT_EQ(libs.at("global").n_entries, 249u);
}

TEST(LibraryJson, RoundTripsAndHasStructure) {
  std::mt19937_64 rng(8);
  const auto scope = testing::random_scope(rng, 30);
  const auto lib = build_library("global", ptrs(scope), {{"age", 0.5}, {"hand", 0.5}});
  const auto j = library_to_json(lib);
  EXPECT_TRUE(j.at("hard_examples").at("occurrence_boundary").contains("for_0"));
  EXPECT_TRUE(j.at("hard_examples").at("occurrence_boundary").contains("for_1"));
  EXPECT_TRUE(j.at("hard_examples").at("severity_boundary").contains("for_2"));
  EXPECT_EQ(library_to_json(library_from_json(j)).dump(), j.dump());
}

}  // namespace
}  // namespace floodrag::kb
