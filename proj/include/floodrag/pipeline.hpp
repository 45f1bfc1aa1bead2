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

// End-to-end stages over a run directory:
//
//   profile     profile.json, profile_report.txt
//   textmode    textmodes_train.jsonl, textmodes_test.jsonl
//   build-kb    kb.jsonl, kb_rejects.jsonl
//   freeshots   libraries/<scope>.json
//   predict     predictions.jsonl, audits.jsonl
//   evaluate    metrics.json, metrics.txt
//   ablation    ablation/<I..IV>/..., ablation.json, ablation.txt
//
// Every stage also writes config.json and inputs.json and merges its LLM
// calls into transcript.jsonl and usage.jsonl.

#pragma once

#include <cstdint>
#include <filesystem>
#include <string>

#include "floodrag/divergence.hpp"
#include "floodrag/downgrade.hpp"
#include "floodrag/evaluation.hpp"
#include "floodrag/llm_gateway.hpp"
#include "json.hpp"

namespace floodrag::pipeline {

struct RunConfig {
  std::filesystem::path train_path;
  std::filesystem::path test_path;
  std::filesystem::path output_dir = "run";
  divergence::DivergenceConfig divergence;
  std::size_t min_scope = 100;
  double epsilon = kb::kDefaultEpsilon;
  std::size_t pas_k = 3;
  double bts_quantile = 0.1;
  double radius_km = 1.0;
  std::size_t k_max = 3;
  std::size_t batch_size = 20;
  int max_reasks = 1;
  llm::BackendConfig backend;
  downgrade::Thresholds downgrade;
  eval::AblationConfig ablation = eval::AblationConfig::kIV;
  std::uint64_t seed = 0;

  void validate() const;
};

nlohmann::ordered_json config_to_json(const RunConfig& c);
/// Relative paths resolve against `base_dir`.
RunConfig config_from_json(const nlohmann::json& j, const std::filesystem::path& base_dir = ".");
RunConfig load_config(const std::filesystem::path& path);

struct StageResult {
  std::size_t rows = 0;
  std::size_t failed_rows = 0;
  std::string summary;

  int exit_code() const { return failed_rows == 0 ? 0 : 2; }
};

StageResult cmd_profile(const RunConfig& config);
StageResult cmd_textmode(const RunConfig& config);
StageResult cmd_build_kb(const RunConfig& config);
StageResult cmd_freeshots(const RunConfig& config);
StageResult cmd_predict(const RunConfig& config);
StageResult cmd_evaluate(const RunConfig& config);
StageResult cmd_ablation(const RunConfig& config);

/// profile, build-kb, freeshots, predict, evaluate in order.
StageResult run_all(const RunConfig& config);

}  // namespace floodrag::pipeline
