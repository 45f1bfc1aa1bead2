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


#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "floodrag/divergence.hpp"
#include "floodrag/downgrade.hpp"
#include "floodrag/evaluation.hpp"
#include "floodrag/llm_gateway.hpp"
#include "floodrag/pipeline.hpp"
#include "floodrag/prompt_forge.hpp"
#include "floodrag/retrieval.hpp"

namespace py = pybind11;
using namespace floodrag;

namespace {

std::vector<PdeCategory> to_labels(const std::vector<int>& v) {
  std::vector<PdeCategory> out;
  out.reserve(v.size());
  for (int x : v) out.push_back(category_from_int(x));
  return out;
}

std::vector<std::string> violation_names(const std::vector<prompt::Violation>& v) {
  std::vector<std::string> out;
  for (const auto& x : v) out.emplace_back(prompt::violation_name(x.code));
  return out;
}

// Objects cross the boundary as JSON text; the package decodes them.
std::string parse_trajectory_json(const std::string& raw) {
  const auto c = prompt::parse_trajectory(raw);
  nlohmann::ordered_json j;
  j["ok"] = c.ok();
  j["violations"] = violation_names(c.violations);
  if (c.value) {
    j["think"] = c.value->think;
    j["answer"] = to_int(c.value->answer);
  }
  return j.dump();
}

std::string parse_prediction_json(const std::string& line) {
  const auto c = prompt::parse_prediction(line);
  nlohmann::ordered_json j;
  j["ok"] = c.ok();
  j["violations"] = violation_names(c.violations);
  if (c.value) {
    j["row_id"] = c.value->row_id;
    j["pred_label"] = to_int(c.value->pred_label);
    j["think"] = c.value->trajectory.think;
  }
  return j.dump();
}

std::string apply_downgrade_json(int pred, const std::string& think,
                                 const std::vector<std::pair<int, std::string>>& neighbors) {
  std::vector<downgrade::NeighborEvidence> n;
  for (const auto& [label, reasoning] : neighbors) n.push_back({category_from_int(label), reasoning});
  return downgrade::decision_to_json(downgrade::apply_downgrade(category_from_int(pred), think, n)).dump();
}

std::string plan_injection_json(int count, std::optional<int> nearest) {
  std::optional<PdeCategory> label;
  if (nearest) label = category_from_int(*nearest);
  const auto p = retrieval::plan_injection(count, label);
  nlohmann::ordered_json j;
  j["neighbor_count"] = p.neighbor_count;
  j["prototypes_per_level"] = p.prototypes_per_level;
  j["hard_examples"] = nlohmann::ordered_json::array();
  for (auto h : p.hard_examples) j["hard_examples"].push_back(retrieval::hard_slot_name(h));
  return j.dump();
}

std::string classification_metrics_json(const std::vector<int>& y, const std::vector<int>& yhat) {
  return eval::prediction_metrics_to_json(eval::classification_metrics(to_labels(y), to_labels(yhat))).dump();
}

std::string run_stage(const std::string& stage, const std::string& config_path) {
  const auto config = pipeline::load_config(config_path);
  pipeline::StageResult r;
  if (stage == "profile") {
    r = pipeline::cmd_profile(config);
  } else if (stage == "textmode") {
    r = pipeline::cmd_textmode(config);
  } else if (stage == "build-kb") {
    r = pipeline::cmd_build_kb(config);
  } else if (stage == "freeshots") {
    r = pipeline::cmd_freeshots(config);
  } else if (stage == "predict") {
    r = pipeline::cmd_predict(config);
  } else if (stage == "evaluate") {
    r = pipeline::cmd_evaluate(config);
  } else if (stage == "ablation") {
    r = pipeline::cmd_ablation(config);
  } else if (stage == "run") {
    r = pipeline::run_all(config);
  } else {
    throw std::invalid_argument("unknown stage: " + stage);
  }
  nlohmann::ordered_json j;
  j["rows"] = r.rows;
  j["failed_rows"] = r.failed_rows;
  j["summary"] = r.summary;
  j["output_dir"] = config.output_dir.string();
  return j.dump();
}

}  // namespace

PYBIND11_MODULE(_floodrag, m) {
  m.doc() = "Native core of the floodrag package.";
  py::register_exception<Error>(m, "FloodragError", PyExc_RuntimeError);

  m.def("ks_statistic", [](const std::vector<double>& a, const std::vector<double>& b) {
    return divergence::ks_statistic(a, b);
  });
  m.def(
      "js_divergence",
      [](const std::vector<double>& a, const std::vector<double>& b, int bins) {
        return divergence::js_divergence(a, b, bins);
      },
      py::arg("a"), py::arg("b"), py::arg("bins") = 64);
  m.def("composite_score", &divergence::composite_score, py::arg("js"), py::arg("ks"), py::arg("w_js") = 0.7,
        py::arg("w_ks") = 0.3);
  m.def("haversine_km", &retrieval::haversine_km);
  m.def("plan_injection_json", &plan_injection_json, py::arg("neighbor_count"), py::arg("nearest_label") = py::none());
  m.def("parse_trajectory_json", &parse_trajectory_json);
  m.def("parse_prediction_json", &parse_prediction_json);
  m.def("apply_downgrade_json", &apply_downgrade_json, py::arg("pred"), py::arg("think"),
        py::arg("neighbors") = std::vector<std::pair<int, std::string>>{});
  m.def("severity_score", [](const std::vector<int>& y, const std::vector<int>& yhat) {
    return eval::severity_score(to_labels(y), to_labels(yhat));
  });
  m.def("classification_metrics_json", &classification_metrics_json);
  m.def("efficiency", &eval::efficiency);
  m.def("prompt_hash", [](const std::string& system, const std::string& user) {
    return llm::prompt_hash(prompt::PromptBundle{system, user, {}, prompt::PromptKind::kPrediction});
  });
  m.def("run_stage_json", &run_stage, py::arg("stage"), py::arg("config_path"),
        py::call_guard<py::gil_scoped_release>());
}
