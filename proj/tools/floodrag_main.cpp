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

// floodrag command-line driver. Exit codes: 0 success, 1 error, 2 some rows
// failed validation.

#include <functional>
#include <iostream>

#include "CLI11.hpp"
#include "floodrag/pipeline.hpp"

namespace {

using floodrag::pipeline::RunConfig;
using floodrag::pipeline::StageResult;

struct Overrides {
  std::string config_path;
  std::string train, test, out, backend, endpoint, model, mock_script, ablation;
  std::optional<std::size_t> batch_size, min_scope;
  std::optional<int> max_parallel, max_reasks;
  std::optional<double> radius_km;
  bool mock_synthesize = false;
};

void add_options(CLI::App* app, Overrides& o) {
  app->add_option("-c,--config", o.config_path, "Run configuration (JSON)");
  app->add_option("--train", o.train, "Training dataset (.jsonl/.csv/.tsv)");
  app->add_option("--test", o.test, "Test dataset");
  app->add_option("-o,--out", o.out, "Run directory");
  app->add_option("--backend-id", o.backend, "Backend id; the API key is read from <ID>_API_KEY");
  app->add_option("--endpoint", o.endpoint, "Chat-completions URL or \"mock\"");
  app->add_option("--model", o.model, "Model name");
  app->add_option("--mock-script", o.mock_script, "Scripted mock responses (JSONL)");
  app->add_flag("--mock-synthesize", o.mock_synthesize, "Answer unscripted mock prompts with the built-in responder");
  app->add_option("--batch-size", o.batch_size, "Rows per LLM call");
  app->add_option("--max-parallel", o.max_parallel, "Concurrent LLM calls");
  app->add_option("--max-reasks", o.max_reasks, "Re-asks after a validation failure");
  app->add_option("--min-scope", o.min_scope, "Entries needed for a local free-shot library");
  app->add_option("--radius-km", o.radius_km, "Neighbor search radius");
  app->add_option("--ablation", o.ablation, "Configuration I, II, III or IV")->check(CLI::IsMember({"I", "II", "III", "IV"}));
}

RunConfig resolve(const Overrides& o) {
  RunConfig c = o.config_path.empty() ? RunConfig{} : floodrag::pipeline::load_config(o.config_path);
  if (!o.train.empty()) c.train_path = o.train;
  if (!o.test.empty()) c.test_path = o.test;
  if (!o.out.empty()) c.output_dir = o.out;
  if (!o.backend.empty()) c.backend.backend_id = o.backend;
  if (!o.endpoint.empty()) c.backend.endpoint = o.endpoint;
  if (!o.model.empty()) c.backend.model_name = o.model;
  if (!o.mock_script.empty()) c.backend.mock_script = o.mock_script;
  if (o.mock_synthesize) c.backend.mock_synthesize = true;
  if (o.batch_size) c.batch_size = *o.batch_size;
  if (o.max_parallel) c.backend.max_parallel = *o.max_parallel;
  if (o.max_reasks) c.max_reasks = *o.max_reasks;
  if (o.min_scope) c.min_scope = *o.min_scope;
  if (o.radius_km) c.radius_km = *o.radius_km;
  if (!o.ablation.empty()) c.ablation = floodrag::eval::ablation_from_name(o.ablation);
  return c;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Retrieval-augmented ordinal flood damage nowcasting"};
  app.require_subcommand(1);
  Overrides o;
  std::function<StageResult(const RunConfig&)> stage;

  const std::vector<std::pair<std::string, std::function<StageResult(const RunConfig&)>>> commands = {
      {"profile", floodrag::pipeline::cmd_profile},     {"textmode", floodrag::pipeline::cmd_textmode},
      {"build-kb", floodrag::pipeline::cmd_build_kb},   {"freeshots", floodrag::pipeline::cmd_freeshots},
      {"predict", floodrag::pipeline::cmd_predict},     {"evaluate", floodrag::pipeline::cmd_evaluate},
      {"ablation", floodrag::pipeline::cmd_ablation},   {"run", floodrag::pipeline::run_all},
  };
  const std::map<std::string, std::string> help = {
      {"profile", "Rank features by boundary divergence"},
      {"textmode", "Paraphrase records into text modes"},
      {"build-kb", "Generate and audit knowledge-base reasoning"},
      {"freeshots", "Select prototypes and hard examples"},
      {"predict", "Predict PDE categories for the test split"},
      {"evaluate", "Score predictions and rationales"},
      {"ablation", "Run configurations I-IV"},
      {"run", "profile, build-kb, freeshots, predict and evaluate"},
  };
  for (const auto& [name, fn] : commands) {
    auto* sub = app.add_subcommand(name, help.at(name));
    add_options(sub, o);
    sub->callback([&stage, fn = fn] { stage = fn; });
  }

  CLI11_PARSE(app, argc, argv);
  try {
    const auto result = stage(resolve(o));
    std::cout << result.summary << "\n";
    return result.exit_code();
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
}
