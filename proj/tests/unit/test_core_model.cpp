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

#include <random>
#include <set>

#include "floodrag/core_model.hpp"
#include "test_support.hpp"

namespace floodrag {
namespace {

TEST(VariableDictionary, HasTheFourteenPredictors) {
  const auto d = VariableDictionary::standard();
  const std::set<std::string> expected = {"age",       "FAR",        "Poly_num",   "poi_num",    "fndn",
                                          "Popu_num",  "elevation",  "dis_coa",    "impervious", "roughness",
                                          "dis_stream", "hand",      "claims_past_50yr", "Rain_max"};
  const auto& keys = d.predictor_keys();
  EXPECT_EQ(std::set<std::string>(keys.begin(), keys.end()), expected);
  EXPECT_EQ(keys.size(), 14u);
  for (const auto& k : expected) {
    EXPECT_NO_THROW(d.at(k)) << k;
    EXPECT_NE(d.at(k).risk_direction, RiskDirection::kNeutral) << k;
  }
  EXPECT_EQ(d.find("nope"), nullptr);
  EXPECT_THROW(d.at("nope"), std::out_of_range);
}

TEST(VariableDictionary, HandIsMetersAndProtective) {
  const auto& hand = VariableDictionary::standard().at("hand");
  EXPECT_EQ(hand.unit, "m");
  EXPECT_EQ(hand.risk_direction, RiskDirection::kHigherIsProtective);
}

TEST(LabelFromSumPde, Thresholds) {
  EXPECT_EQ(label_from_sum_pde(0.0), PdeCategory::kLow);
  EXPECT_EQ(label_from_sum_pde(0.453263), PdeCategory::kMedium);
  EXPECT_EQ(label_from_sum_pde(1.0), PdeCategory::kMedium);
  EXPECT_EQ(label_from_sum_pde(1.0000001), PdeCategory::kHigh);
  EXPECT_THROW(label_from_sum_pde(-0.1), std::invalid_argument);
}

TEST(CategoryFromInt, RejectsOutOfRange) {
  EXPECT_EQ(category_from_int(2), PdeCategory::kHigh);
  EXPECT_THROW(category_from_int(3), std::invalid_argument);
  EXPECT_THROW(category_from_int(-1), std::invalid_argument);
}

TEST(LoadDataset, AppendixRecord) {
  const auto loaded = load_dataset(testing::fixture("appendix_b_record.jsonl"), VariableDictionary::standard());
  ASSERT_EQ(loaded.records.size(), 1u);
  const auto& r = loaded.records.front();
  EXPECT_EQ(r.row_id, 429);
  EXPECT_EQ(r.huc12, "120401020103");
  ASSERT_TRUE(r.label.has_value());
  EXPECT_EQ(*r.label, PdeCategory::kMedium);
  EXPECT_NEAR(*r.sum_pde, 0.045665492259151, 1e-15);
  EXPECT_DOUBLE_EQ(*r.value("Rain_max"), 13.24);
  EXPECT_EQ(r.predictors.size(), 14u);
}

TEST(LoadDataset, SkipsMalformedHuc12) {
  const auto loaded = parse_jsonl_dataset(
      "{\"index\": 1, \"x\": -95.0, \"y\": 30.0, \"huc12\": \"12AB\", \"age\": 3}\n"
      "{\"index\": 2, \"x\": -95.0, \"y\": 30.0, \"huc12\": \"120401020103\", \"age\": 3}\n",
      VariableDictionary::standard());
  ASSERT_EQ(loaded.records.size(), 1u);
  EXPECT_EQ(loaded.records.front().row_id, 2);
  ASSERT_EQ(loaded.warnings.size(), 1u);
  EXPECT_EQ(loaded.warnings.front().message, "malformed huc12");
}

TEST(LoadDataset, EmptyInputIsAnError) {
  try {
    parse_jsonl_dataset("", VariableDictionary::standard());
    FAIL() << "expected Error";
  } catch (const Error& e) {
    EXPECT_EQ(std::string(e.what()), "empty dataset");
  }
}

TEST(LoadDataset, DelimitedAndJsonAgree) {
  const std::string csv =
      "index,x,y,huc12,age,hand,Sum_PDE,PDE_category\n"
      "7,-95.1,30.2,120401020103,12,NA,0.0,0\n"
      "8,-95.2,30.3,120401020103,15,4.5,1.5,2\n";
  const auto a = parse_delimited_dataset(csv, ',', VariableDictionary::standard());
  ASSERT_EQ(a.records.size(), 2u);
  EXPECT_FALSE(a.records[0].value("hand").has_value());
  const auto b = parse_jsonl_dataset(serialize_records(a.records, VariableDictionary::standard()),
                                     VariableDictionary::standard());
  EXPECT_EQ(a.records, b.records);
}

TEST(LoadDataset, SerializationRoundTrips) {
  const auto loaded = load_dataset(testing::source_dir() / "data" / "synthetic" / "train.jsonl",
                                   VariableDictionary::standard());
  ASSERT_EQ(loaded.records.size(), 150u);
  EXPECT_TRUE(loaded.warnings.empty());
  const auto text = serialize_records(loaded.records, VariableDictionary::standard());
  const auto again = parse_jsonl_dataset(text, VariableDictionary::standard());
  EXPECT_EQ(loaded.records, again.records);
  EXPECT_EQ(serialize_records(again.records, VariableDictionary::standard()), text);
}

TEST(ClassDistribution, CountsLabels) {
  std::vector<Record> rs(4);
  rs[0].label = PdeCategory::kLow;
  rs[1].label = PdeCategory::kLow;
  rs[2].label = PdeCategory::kMedium;
  rs[3].label = PdeCategory::kHigh;
  const auto d = class_distribution(rs);
  EXPECT_DOUBLE_EQ(d.at(PdeCategory::kLow), 0.5);
  EXPECT_DOUBLE_EQ(d.at(PdeCategory::kMedium), 0.25);
  EXPECT_DOUBLE_EQ(d.at(PdeCategory::kHigh), 0.25);
}

TEST(ClassDistribution, MatchesCountingOracle) {
  std::mt19937_64 rng(11);
  std::vector<Record> rs(1000);
  std::array<int, 3> tally{};
  for (auto& r : rs) {
    const int v = static_cast<int>(rng() % 3);
    r.label = category_from_int(v);
    ++tally[static_cast<std::size_t>(v)];
  }
  const auto d = class_distribution(rs);
  for (int v = 0; v < 3; ++v) {
    EXPECT_EQ(d.at(category_from_int(v)), tally[static_cast<std::size_t>(v)] / 1000.0);
  }
}

}  // namespace
}  // namespace floodrag
