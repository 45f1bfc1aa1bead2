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


// Helpers for tests that drive the pipeline on the bundled synthetic set.

#pragma once

#include <map>
#include <string>
#include <vector>

#include "floodrag/pipeline.hpp"
#include "test_support.hpp"

namespace floodrag::testing {

inline pipeline::RunConfig scripted_config(const std::filesystem::path& out) {
  auto c = pipeline::load_config(source_dir() / "configs" / "synthetic_scripted.json");
  c.output_dir = out;
  return c;
}

inline std::vector<nlohmann::json> read_jsonl(const std::filesystem::path& path) {
  std::vector<nlohmann::json> out;
  std::istringstream in(read_file(path));
  std::string line;
  while (std::getline(in, line)) {
    if (!text::trim(line).empty()) out.push_back(nlohmann::json::parse(line));
  }
  return out;
}

struct AblationLabels {
  std::map<std::int64_t, int> final_label;
  std::map<std::int64_t, std::string> fired_rule;  // IV only
};

inline AblationLabels ablation_labels(const std::filesystem::path& run_dir, const std::string& config) {
  AblationLabels out;
  for (const auto& p : read_jsonl(run_dir / "ablation" / config / "predictions.jsonl")) {
    if (p.at("status") == "ok") out.final_label[p.at("row_id").get<std::int64_t>()] = p.at("final_label").get<int>();
  }
  for (const auto& a : read_jsonl(run_dir / "ablation" / config / "audits.jsonl")) {
    if (a.contains("downgrade") && a.at("downgrade").is_object()) {
      out.fired_rule[a.at("row_id").get<std::int64_t>()] = a.at("downgrade").at("fired_rule").get<std::string>();
    }
  }
  return out;
}

}  // namespace floodrag::testing
