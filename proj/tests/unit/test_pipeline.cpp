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

#include "run_support.hpp"

namespace floodrag::pipeline {
namespace {

namespace fs = std::filesystem;

TEST(RunConfig, JsonRoundTrip) {
  const auto c = testing::scripted_config("/tmp/x");
  const auto j = config_to_json(c);
  EXPECT_EQ(config_to_json(config_from_json(nlohmann::json::parse(j.dump()))).dump(), j.dump());
  auto bad = c;
  bad.batch_size = 0;
  EXPECT_THROW(bad.validate(), std::invalid_argument);
}

TEST(Pipeline, ScriptedRunIsByteIdentical) {
  const auto dir = testing::scratch_dir("pipeline_determinism");
  const auto c = testing::scripted_config(dir);
  EXPECT_EQ(run_all(c).failed_rows, 0u);
  const auto predictions = read_file(dir / "predictions.jsonl");
  const auto metrics = read_file(dir / "metrics.json");
  const auto kb = read_file(dir / "kb.jsonl");
  EXPECT_EQ(testing::read_jsonl(dir / "predictions.jsonl").size(), 50u);

  fs::remove_all(dir);
  EXPECT_EQ(run_all(c).failed_rows, 0u);
  EXPECT_EQ(read_file(dir / "predictions.jsonl"), predictions);
  EXPECT_EQ(read_file(dir / "metrics.json"), metrics);
  EXPECT_EQ(read_file(dir / "kb.jsonl"), kb);
}

TEST(Pipeline, ScriptedFaultIsRetried) {
  const auto dir = testing::scratch_dir("pipeline_retry");
  run_all(testing::scripted_config(dir));
  std::int64_t retries = 0;
  for (const auto& u : testing::read_jsonl(dir / "usage.jsonl")) retries += u.at("retries").get<std::int64_t>();
  EXPECT_GE(retries, 1);
  for (const auto& t : testing::read_jsonl(dir / "transcript.jsonl")) {
    EXPECT_FALSE(t.contains("api_key"));
  }
}

TEST(Pipeline, StageNeedsEarlierOutputs) {
  const auto dir = testing::scratch_dir("pipeline_order");
  EXPECT_THROW(cmd_freeshots(testing::scripted_config(dir)), Error);
}

TEST(Pipeline, AblationDowngradeIsMonotone) {
  const auto dir = testing::scratch_dir("pipeline_ablation");
  const auto c = testing::scripted_config(dir);
  run_all(c);
  EXPECT_EQ(cmd_ablation(c).failed_rows, 0u);
  const auto iii = testing::ablation_labels(dir, "III");
  const auto iv = testing::ablation_labels(dir, "IV");
  ASSERT_EQ(iii.final_label.size(), iv.final_label.size());
  int fired = 0;
  for (const auto& [id, label] : iv.final_label) {
    EXPECT_LE(label, iii.final_label.at(id));
    const bool rule = iv.fired_rule.at(id) != "none";
    fired += rule;
    EXPECT_EQ(label != iii.final_label.at(id), rule) << id;
  }
  EXPECT_GT(fired, 0);

  // Config I prompts carry no neighbors and no free-shots.
  for (const auto& a : testing::read_jsonl(dir / "ablation" / "I" / "audits.jsonl")) {
    EXPECT_TRUE(a.at("retrieval").at("neighbors").empty());
    EXPECT_TRUE(a.at("retrieval").at("free_shots").empty());
  }
}

}  // namespace
}  // namespace floodrag::pipeline
