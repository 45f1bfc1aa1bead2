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

#include "floodrag/pipeline.hpp"

#include <algorithm>
#include <future>
#include <iostream>
#include <set>
#include <sstream>

#include "floodrag/knowledge_base.hpp"
#include "floodrag/prompt_forge.hpp"
#include "floodrag/retrieval.hpp"
#include "floodrag/text_util.hpp"

namespace floodrag::pipeline {

namespace fs = std::filesystem;
using nlohmann::json;
using nlohmann::ordered_json;

// ---------------------------------------------------------------------------
// Configuration

void RunConfig::validate() const {
  if (train_path.empty()) throw std::invalid_argument("config: train dataset path is required");
  if (output_dir.empty()) throw std::invalid_argument("config: output_dir is required");
  if (batch_size < 1) throw std::invalid_argument("config: batch_size must be >= 1");
  if (k_max > 3) throw std::invalid_argument("config: k_max must be <= 3 (the injection policy covers 0..3)");
  if (!(radius_km > 0.0)) throw std::invalid_argument("config: radius_km must be positive");
  if (max_reasks < 0) throw std::invalid_argument("config: max_reasks must be >= 0");
  if (!(epsilon > 0.0)) throw std::invalid_argument("config: epsilon must be positive");
  if (bts_quantile < 0.0 || bts_quantile > 1.0) throw std::invalid_argument("config: bts_quantile must lie in [0, 1]");
  divergence::composite_score(0.0, 0.0, divergence.w_js, divergence.w_ks);
  backend.validate();
}

ordered_json config_to_json(const RunConfig& c) {
  ordered_json j;
  j["train"] = c.train_path.string();
  j["test"] = c.test_path.string();
  j["output_dir"] = c.output_dir.string();
  j["divergence"] = {{"w_js", c.divergence.w_js},
                     {"w_ks", c.divergence.w_ks},
                     {"bins", c.divergence.bins},
                     {"log_base", c.divergence.log_base},
                     {"salient_k", c.divergence.salient_k}};
  j["freeshots"] = {{"min_scope", c.min_scope}, {"epsilon", c.epsilon}, {"pas_k", c.pas_k}};
  j["retrieval"] = {{"radius_km", c.radius_km}, {"k_max", c.k_max}};
  j["prompting"] = {{"batch_size", c.batch_size}, {"max_reasks", c.max_reasks}};
  j["backend"] = llm::config_to_json(c.backend);
  j["downgrade"] = {{"light_min", c.downgrade.light_min},
                    {"severity_max", c.downgrade.severity_max},
                    {"weak_evidence_max", c.downgrade.weak_evidence_max}};
  j["evaluation"] = {{"bts_quantile", c.bts_quantile}};
  j["ablation"] = eval::ablation_name(c.ablation);
  j["seed"] = c.seed;
  return j;
}

namespace {

fs::path resolve(const fs::path& base, const std::string& p) {
  if (p.empty()) return {};
  fs::path path(p);
  return path.is_absolute() ? path : (base / path).lexically_normal();
}

}  // namespace

RunConfig config_from_json(const json& j, const fs::path& base_dir) {
  RunConfig c;
  c.train_path = resolve(base_dir, j.value("train", std::string()));
  c.test_path = resolve(base_dir, j.value("test", std::string()));
  c.output_dir = resolve(base_dir, j.value("output_dir", std::string("run")));
  if (j.contains("divergence")) {
    const auto& d = j.at("divergence");
    c.divergence.w_js = d.value("w_js", c.divergence.w_js);
    c.divergence.w_ks = d.value("w_ks", c.divergence.w_ks);
    c.divergence.bins = d.value("bins", c.divergence.bins);
    c.divergence.log_base = d.value("log_base", c.divergence.log_base);
    c.divergence.salient_k = d.value("salient_k", c.divergence.salient_k);
  }
  if (j.contains("freeshots")) {
    const auto& f = j.at("freeshots");
    c.min_scope = f.value("min_scope", c.min_scope);
    c.epsilon = f.value("epsilon", c.epsilon);
    c.pas_k = f.value("pas_k", c.pas_k);
  }
  if (j.contains("retrieval")) {
    c.radius_km = j.at("retrieval").value("radius_km", c.radius_km);
    c.k_max = j.at("retrieval").value("k_max", c.k_max);
  }
  if (j.contains("prompting")) {
    c.batch_size = j.at("prompting").value("batch_size", c.batch_size);
    c.max_reasks = j.at("prompting").value("max_reasks", c.max_reasks);
  }
  if (j.contains("backend")) {
    c.backend = llm::config_from_json(j.at("backend"));
    if (!c.backend.mock_script.empty()) c.backend.mock_script = resolve(base_dir, c.backend.mock_script).string();
  }
  if (j.contains("downgrade")) {
    const auto& d = j.at("downgrade");
    c.downgrade.light_min = d.value("light_min", c.downgrade.light_min);
    c.downgrade.severity_max = d.value("severity_max", c.downgrade.severity_max);
    c.downgrade.weak_evidence_max = d.value("weak_evidence_max", c.downgrade.weak_evidence_max);
  }
  if (j.contains("evaluation")) c.bts_quantile = j.at("evaluation").value("bts_quantile", c.bts_quantile);
  if (j.contains("ablation")) c.ablation = eval::ablation_from_name(j.at("ablation").get<std::string>());
  c.seed = j.value("seed", c.seed);
  return c;
}

RunConfig load_config(const fs::path& path) {
  json j;
  try {
    j = json::parse(read_file(path));
  } catch (const json::exception& e) {
    throw Error(path.string() + ": " + e.what());
  }
  return config_from_json(j, path.parent_path());
}

// ---------------------------------------------------------------------------
// Run-directory helpers

namespace {

struct Paths {
  fs::path root;
  fs::path config() const { return root / "config.json"; }
  fs::path inputs() const { return root / "inputs.json"; }
  fs::path profile() const { return root / "profile.json"; }
  fs::path profile_report() const { return root / "profile_report.txt"; }
  fs::path textmodes(const std::string& split) const { return root / ("textmodes_" + split + ".jsonl"); }
  fs::path kb() const { return root / "kb.jsonl"; }
  fs::path kb_rejects() const { return root / "kb_rejects.jsonl"; }
  fs::path libraries() const { return root / "libraries"; }
  fs::path transcript() const { return root / "transcript.jsonl"; }
  fs::path usage() const { return root / "usage.jsonl"; }
};

const VariableDictionary& dictionary() {
  static const VariableDictionary d = VariableDictionary::standard();
  return d;
}

std::string jsonl(const std::vector<ordered_json>& lines) {
  std::string out;
  for (const auto& l : lines) out += l.dump() + "\n";
  return out;
}

void write_common(const RunConfig& config) {
  const Paths p{config.output_dir};
  write_file(p.config(), config_to_json(config).dump(2) + "\n");
  ordered_json inputs;
  for (const auto& [name, path] : {std::pair{"train", config.train_path}, std::pair{"test", config.test_path}}) {
    if (path.empty() || !fs::exists(path)) {
      inputs[name] = nullptr;
    } else {
      inputs[name] = {{"path", path.string()}, {"sha256", llm::sha256_hex(read_file(path))}};
    }
  }
  write_file(p.inputs(), inputs.dump(2) + "\n");
}

std::vector<Record> load_records(const fs::path& path) {
  if (path.empty()) throw Error("dataset path not configured");
  auto loaded = load_dataset(path, dictionary());
  for (const auto& w : loaded.warnings) {
    std::cerr << path.string() << ":" << w.line << ": " << w.message << "\n";
  }
  return std::move(loaded.records);
}

std::vector<ordered_json> read_jsonl(const fs::path& path) {
  std::vector<ordered_json> out;
  std::istringstream in(read_file(path));
  std::string line;
  while (std::getline(in, line)) {
    if (text::trim(line).empty()) continue;
    out.push_back(ordered_json::parse(line));
  }
  return out;
}

/// Replaces the lines of `path` whose call_key starts with `prefix`.
void merge_log(const fs::path& path, const std::string& prefix, const std::vector<ordered_json>& fresh) {
  std::vector<std::pair<std::string, std::string>> lines;
  if (fs::exists(path)) {
    for (const auto& j : read_jsonl(path)) {
      const auto key = j.at("call_key").get<std::string>();
      if (!text::starts_with(key, prefix)) lines.emplace_back(key, j.dump());
    }
  }
  for (const auto& j : fresh) lines.emplace_back(j.at("call_key").get<std::string>(), j.dump());
  std::stable_sort(lines.begin(), lines.end(), [](const auto& a, const auto& b) { return a.first < b.first; });
  std::string out;
  for (const auto& [k, l] : lines) out += l + "\n";
  write_file(path, out);
}

void flush_gateway(const RunConfig& config, const llm::Gateway& gw, const std::string& prefix) {
  const Paths p{config.output_dir};
  std::vector<ordered_json> t, u;
  for (const auto& line : gw.transcript()) t.push_back(llm::transcript_to_json(line));
  for (const auto& r : gw.ledger().records()) u.push_back(llm::usage_to_json(r));
  merge_log(p.transcript(), prefix, t);
  merge_log(p.usage(), prefix, u);
}

llm::Gateway make_gateway(const RunConfig& config) {
  return llm::Gateway(config.backend, llm::make_backend(config.backend));
}

std::string batch_key(const std::string& prefix, std::size_t batch) {
  char buf[16];
  std::snprintf(buf, sizeof(buf), "%04zu", batch);
  return prefix + buf;
}

template <class T>
struct RowResult {
  std::optional<T> value;
  std::vector<std::string> errors;
};

/// One batch with row-level acceptance: rows valid on any attempt are kept;
/// the re-ask lists the violations of the rows still pending.
template <class T, class Check>
std::map<std::int64_t, RowResult<T>> run_batch(llm::Gateway& gw, const prompt::PromptBundle& bundle,
                                               const std::string& key, int max_reasks, Check check) {
  std::map<std::int64_t, RowResult<T>> out;
  std::set<std::int64_t> pending(bundle.expected_rows.begin(), bundle.expected_rows.end());
  for (auto id : pending) out[id];
  auto current = bundle;
  for (int attempt = 0; attempt <= max_reasks && !pending.empty(); ++attempt) {
    const std::string tag = "attempt " + std::to_string(attempt + 1) + ": ";
    std::string response;
    try {
      response = gw.invoke(current, attempt == 0 ? key : key + "/reask-" + std::to_string(attempt));
    } catch (const llm::AuthError&) {
      throw;
    } catch (const Error& e) {
      for (auto id : pending) out[id].errors.push_back(tag + "backend failure: " + e.what());
      break;
    }
    prompt::BatchVerdict<T> verdict = check(response, bundle);
    std::vector<prompt::Violation> reported = verdict.batch_violations;
    for (auto it = pending.begin(); it != pending.end();) {
      auto row = verdict.rows.find(*it);
      if (row != verdict.rows.end() && row->second.ok()) {
        out[*it].value = std::move(*row->second.value);
        it = pending.erase(it);
        continue;
      }
      if (row == verdict.rows.end()) {
        out[*it].errors.push_back(tag + "missing_row");
      } else {
        out[*it].errors.push_back(tag + prompt::describe(row->second.violations));
        for (const auto& v : row->second.violations) {
          reported.push_back({v.code, "row " + std::to_string(*it) + ": " + v.detail});
        }
      }
      ++it;
    }
    current = llm::reask_bundle(bundle, reported);
  }
  return out;
}

/// Runs every bundle concurrently (the gateway bounds in-flight calls) and
/// merges the row results.
template <class T, class Check>
std::map<std::int64_t, RowResult<T>> run_batches(llm::Gateway& gw, const std::vector<prompt::PromptBundle>& bundles,
                                                 const std::string& prefix, int max_reasks, Check check) {
  std::vector<std::future<std::map<std::int64_t, RowResult<T>>>> jobs;
  for (std::size_t b = 0; b < bundles.size(); ++b) {
    jobs.push_back(std::async(std::launch::async, [&, b] {
      return run_batch<T>(gw, bundles[b], batch_key(prefix, b), max_reasks, check);
    }));
  }
  std::map<std::int64_t, RowResult<T>> out;
  for (auto& j : jobs) out.merge(j.get());
  return out;
}

template <class T>
std::vector<std::vector<T>> chunk(const std::vector<T>& items, std::size_t size) {
  std::vector<std::vector<T>> out;
  for (std::size_t i = 0; i < items.size(); i += size) {
    out.emplace_back(items.begin() + static_cast<std::ptrdiff_t>(i),
                     items.begin() + static_cast<std::ptrdiff_t>(std::min(items.size(), i + size)));
  }
  return out;
}

divergence::DivergenceProfile read_profile(const Paths& p) {
  if (!fs::exists(p.profile())) throw Error("profile.json missing; run the profile stage first");
  return divergence::profile_from_json(json::parse(read_file(p.profile())));
}

std::map<std::int64_t, std::string> read_textmodes(const fs::path& path) {
  std::map<std::int64_t, std::string> out;
  for (const auto& j : read_jsonl(path)) out[j.at("row_id").get<std::int64_t>()] = j.at("text_mode").get<std::string>();
  return out;
}

/// Text modes for one split; returns the number of rows that failed.
std::size_t generate_textmodes(const RunConfig& config, const std::string& split, const std::vector<Record>& records,
                               const divergence::DivergenceProfile& profile) {
  const Paths p{config.output_dir};
  const auto& order = profile.ordered_features.at(divergence::Boundary::kOccurrence);
  std::vector<prompt::PromptBundle> bundles;
  std::vector<std::vector<Record>> batches = chunk(records, config.batch_size);
  for (const auto& b : batches) bundles.push_back(prompt::build_text_mode_prompt(b, order, dictionary()));

  auto gw = make_gateway(config);
  const std::string prefix = "textmode/" + split + "/";
  std::map<std::int64_t, RowResult<std::string>> results;
  {
    std::vector<std::future<std::map<std::int64_t, RowResult<std::string>>>> jobs;
    for (std::size_t i = 0; i < bundles.size(); ++i) {
      jobs.push_back(std::async(std::launch::async, [&, i] {
        return run_batch<std::string>(gw, bundles[i], batch_key(prefix, i), config.max_reasks,
                                      [&](const std::string& response, const prompt::PromptBundle&) {
                                        return prompt::validate_text_mode_batch(response, batches[i]);
                                      });
      }));
    }
    for (auto& j : jobs) results.merge(j.get());
  }
  flush_gateway(config, gw, prefix);

  std::vector<ordered_json> lines, rejects;
  for (const auto& r : records) {
    const auto& res = results.at(r.row_id);
    if (res.value) {
      lines.push_back({{"row_id", r.row_id}, {"text_mode", *res.value}});
    } else {
      rejects.push_back({{"row_id", r.row_id}, {"errors", res.errors}});
    }
  }
  write_file(p.textmodes(split), jsonl(lines));
  write_file(p.root / ("textmode_rejects_" + split + ".jsonl"), jsonl(rejects));
  return rejects.size();
}

std::map<std::int64_t, std::string> ensure_textmodes(const RunConfig& config, const std::string& split,
                                                     const std::vector<Record>& records,
                                                     const divergence::DivergenceProfile& profile) {
  const Paths p{config.output_dir};
  if (!fs::exists(p.textmodes(split))) generate_textmodes(config, split, records, profile);
  return read_textmodes(p.textmodes(split));
}

std::map<std::string, kb::FreeShotLibrary> read_libraries(const Paths& p) {
  if (!fs::exists(p.libraries() / "global.json")) throw Error("libraries missing; run the freeshots stage first");
  std::map<std::string, kb::FreeShotLibrary> out;
  std::vector<fs::path> files;
  for (const auto& f : fs::directory_iterator(p.libraries())) {
    if (f.path().extension() == ".json") files.push_back(f.path());
  }
  std::sort(files.begin(), files.end());
  for (const auto& f : files) {
    auto lib = kb::library_from_json(json::parse(read_file(f)));
    auto scope = lib.scope;
    out.emplace(std::move(scope), std::move(lib));
  }
  return out;
}

std::vector<kb::KbEntry> read_kb(const Paths& p) {
  if (!fs::exists(p.kb())) throw Error("kb.jsonl missing; run the build-kb stage first");
  return kb::load_kb(p.kb(), dictionary());
}


std::map<std::int64_t, Record> by_id(const std::vector<Record>& records) {
  std::map<std::int64_t, Record> out;
  for (const auto& r : records) out.emplace(r.row_id, r);
  return out;
}

// ---------------------------------------------------------------------------
// Prediction

struct PredictionRow {
  std::int64_t row_id = 0;
  bool ok = false;
  prompt::Trajectory trajectory;
  downgrade::DowngradeDecision decision;
  std::vector<downgrade::NeighborEvidence> evidence;
  std::vector<std::string> errors;
  ordered_json retrieval;
};

/// Final labels from the raw answers; without the post-check the raw label
/// passes through unchanged.
void decide(std::vector<PredictionRow>& rows, bool post_check, const downgrade::Thresholds& thresholds) {
  for (auto& row : rows) {
    if (!row.ok) continue;
    const auto raw = row.trajectory.answer;
    if (post_check) {
      row.decision = downgrade::apply_downgrade(raw, row.trajectory.think, row.evidence,
                                                downgrade::CueLexicon::standard(), thresholds);
    } else {
      row.decision = {};
      row.decision.input_label = raw;
      row.decision.output_label = raw;
    }
  }
}

std::vector<PredictionRow> run_predictions(const RunConfig& config, eval::AblationConfig which,
                                           const std::string& call_prefix) {
  const Paths p{config.output_dir};
  const auto profile = read_profile(p);
  const auto test = load_records(config.test_path);
  const auto text_modes = ensure_textmodes(config, "test", test, profile);
  const auto entries = read_kb(p);
  const auto libraries = read_libraries(p);
  const retrieval::KbIndex index(entries);
  const auto rule = downgrade::render_downgrade_rule();

  std::vector<PredictionRow> rows;
  std::vector<prompt::PredictionItem> items;
  for (const auto& r : test) {
    PredictionRow row;
    row.row_id = r.row_id;
    auto tm = text_modes.find(r.row_id);
    if (tm == text_modes.end()) {
      row.errors.push_back("no text mode for this row");
      rows.push_back(std::move(row));
      continue;
    }
    prompt::PredictionItem item;
    item.target = {r.row_id, tm->second, r.x, r.y};
    std::vector<retrieval::NeighborContext> neighbors;
    if (eval::uses_neighbors(which)) neighbors = retrieval::find_neighbors(r, index, config.k_max, config.radius_km);
    for (const auto& n : neighbors) {
      item.neighbors.push_back({n.entry->label(), n.entry->text_mode, n.entry->trajectory.raw, n.distance_km, n.rank});
    }
    retrieval::InjectionPlan plan;
    plan.neighbor_count = static_cast<int>(neighbors.size());
    retrieval::Resolution resolution;
    if (eval::uses_free_shots(which)) {
      plan = retrieval::plan_injection(neighbors);
      resolution = retrieval::resolve_free_shots(plan, r.huc12, libraries);
      for (const auto& s : resolution.shots) {
        item.free_shots.push_back({s.shot->kind == kb::ShotKind::kPrototype, s.shot->level, s.shot->text_mode,
                                   s.shot->reasoning, s.shot->why_selected});
      }
    }
    row.evidence = downgrade::evidence_of(neighbors);
    row.retrieval = retrieval::retrieval_audit(r.row_id, neighbors, plan, resolution);
    rows.push_back(std::move(row));
    items.push_back(std::move(item));
  }

  std::vector<prompt::PromptBundle> bundles;
  for (const auto& b : chunk(items, config.batch_size)) bundles.push_back(prompt::build_prediction_prompt(b, rule));

  auto gw = make_gateway(config);
  auto results = run_batches<prompt::PredictionLine>(
      gw, bundles, call_prefix, config.max_reasks,
      [](const std::string& response, const prompt::PromptBundle& bundle) {
        return prompt::parse_prediction_batch(response, bundle.expected_rows);
      });
  flush_gateway(config, gw, call_prefix);

  for (auto& row : rows) {
    auto it = results.find(row.row_id);
    if (it == results.end()) continue;
    if (it->second.value) {
      row.ok = true;
      row.trajectory = it->second.value->trajectory;
    } else {
      row.errors = it->second.errors;
    }
  }
  decide(rows, eval::uses_post_check(which), config.downgrade);
  return rows;
}

ordered_json prediction_to_json(const PredictionRow& row) {
  ordered_json j;
  j["row_id"] = row.row_id;
  if (!row.ok) {
    j["status"] = "failed";
    j["errors"] = row.errors;
    return j;
  }
  j["status"] = "ok";
  j["raw_label"] = to_int(row.decision.input_label);
  j["final_label"] = to_int(row.decision.output_label);
  j["r1"] = row.trajectory.raw;
  return j;
}

ordered_json audit_to_json(const PredictionRow& row) {
  ordered_json j;
  j["row_id"] = row.row_id;
  j["retrieval"] = row.retrieval.is_null() ? ordered_json::object() : row.retrieval;
  j["downgrade"] = row.ok ? downgrade::decision_to_json(row.decision) : ordered_json(nullptr);
  return j;
}

/// Writes predictions.jsonl and audits.jsonl; returns the failed-row count.
std::size_t write_predictions(const fs::path& dir, const std::vector<PredictionRow>& rows) {
  std::vector<ordered_json> preds, audits;
  std::size_t failed = 0;
  for (const auto& r : rows) {
    preds.push_back(prediction_to_json(r));
    audits.push_back(audit_to_json(r));
    if (!r.ok) ++failed;
  }
  write_file(dir / "predictions.jsonl", jsonl(preds));
  write_file(dir / "audits.jsonl", jsonl(audits));
  return failed;
}

std::vector<PredictionRow> read_predictions(const fs::path& dir) {
  const auto path = dir / "predictions.jsonl";
  if (!fs::exists(path)) throw Error(path.string() + " missing; run the predict stage first");
  std::vector<PredictionRow> rows;
  for (const auto& j : read_jsonl(path)) {
    PredictionRow row;
    row.row_id = j.at("row_id").get<std::int64_t>();
    row.ok = j.at("status").get<std::string>() == "ok";
    if (row.ok) {
      auto parsed = prompt::parse_trajectory(j.at("r1").get<std::string>());
      if (!parsed.ok()) throw Error(path.string() + ": row " + std::to_string(row.row_id) + ": unreadable r1");
      row.trajectory = *parsed.value;
      row.decision.input_label = category_from_int(j.at("raw_label").get<int>());
      row.decision.output_label = category_from_int(j.at("final_label").get<int>());
    }
    rows.push_back(std::move(row));
  }
  return rows;
}

// ---------------------------------------------------------------------------
// Evaluation

struct Evaluation {
  ordered_json metrics;
  std::string text;
  eval::PredictionMetrics prediction;
};

Evaluation evaluate_rows(const RunConfig& config, const std::vector<PredictionRow>& rows, const std::string& name,
                         const std::string& cost_prefix) {
  const Paths p{config.output_dir};
  const auto profile = read_profile(p);
  const auto test = by_id(load_records(config.test_path));
  const auto entries = read_kb(p);
  const auto libraries = read_libraries(p);
  const auto& global = libraries.at("global");

  std::vector<Record> kb_records;
  for (const auto& e : entries) kb_records.push_back(e.record);
  const auto terciles = eval::compute_terciles(kb_records, dictionary().predictor_keys());

  std::vector<PdeCategory> y, yhat;
  std::vector<double> lra_v, sfc_v, fdc_v, pas_v, boundary;
  std::vector<bool> passes;
  bool boundary_ok = true;
  std::size_t failed = 0, fired_21 = 0, fired_10 = 0, unlabeled = 0;
  for (const auto& row : rows) {
    if (!row.ok) {
      ++failed;
      continue;
    }
    auto rec_it = test.find(row.row_id);
    if (rec_it == test.end()) throw Error("prediction for unknown test row " + std::to_string(row.row_id));
    const Record& rec = rec_it->second;
    const auto raw = row.decision.input_label;
    const auto final_label = row.decision.output_label;
    if (raw == PdeCategory::kHigh && final_label == PdeCategory::kMedium) ++fired_21;
    if (raw == PdeCategory::kMedium && final_label == PdeCategory::kLow) ++fired_10;
    if (rec.label) {
      y.push_back(*rec.label);
      yhat.push_back(final_label);
    } else {
      ++unlabeled;
    }
    const auto& think = row.trajectory.think;
    lra_v.push_back(eval::lra(row.trajectory, raw));
    if (!profile.salient_set.empty()) sfc_v.push_back(eval::sfc(think, profile.salient_set, dictionary()));
    fdc_v.push_back(eval::fdc(think, rec, dictionary(), terciles).score);

    const kb::FreeShotLibrary* lib = &global;
    if (auto local = libraries.find(rec.huc12); local != libraries.end() && local->second.prototypes.count(raw)) {
      lib = &local->second;
    }
    if (auto v = eval::pas(think, raw, *lib, rec, dictionary(), config.pas_k, config.epsilon)) pas_v.push_back(*v);

    if (boundary_ok) {
      try {
        const auto m = kb::boundary_margins(rec.predictors, global.stats, global.cue_weights, config.epsilon);
        boundary.push_back(std::min(m.m_occ, m.m_sev));
        passes.push_back(eval::boundary_tradeoff(think, dictionary()).passes());
      } catch (const Error&) {
        boundary_ok = false;
      }
    }
  }

  auto mean = [](const std::vector<double>& v) -> std::optional<double> {
    if (v.empty()) return std::nullopt;
    double s = 0.0;
    for (double x : v) s += x;
    return s / static_cast<double>(v.size());
  };
  eval::ReasoningMetrics rm;
  rm.lra = mean(lra_v);
  rm.sfc = mean(sfc_v);
  rm.fdc = mean(fdc_v);
  rm.pas = mean(pas_v);
  if (boundary_ok && !boundary.empty()) {
    rm.bts = eval::bts(boundary, passes, config.bts_quantile);
    rm.boundary_subset_size = eval::boundary_subset(boundary, config.bts_quantile).size();
  }

  llm::UsageTotals totals;
  if (fs::exists(p.usage())) {
    for (const auto& j : read_jsonl(p.usage())) {
      if (!text::starts_with(j.at("call_key").get<std::string>(), cost_prefix)) continue;
      ++totals.calls;
      totals.prompt_tokens += j.at("prompt_tokens").get<std::int64_t>();
      totals.completion_tokens += j.at("completion_tokens").get<std::int64_t>();
      totals.wall_micros += j.at("wall_micros").get<std::int64_t>();
      totals.retries += j.at("retries").get<std::int64_t>();
    }
  }

  Evaluation out;
  ordered_json& m = out.metrics;
  m["config"] = name;
  m["n_test"] = rows.size();
  m["n_failed"] = failed;
  m["n_unlabeled"] = unlabeled;
  if (!y.empty()) {
    out.prediction = eval::classification_metrics(y, yhat);
    m["prediction"] = eval::prediction_metrics_to_json(out.prediction);
  } else {
    m["prediction"] = nullptr;
  }
  m["reasoning"] = eval::reasoning_metrics_to_json(rm);
  m["downgrade"] = {{"rule_2_to_1", fired_21}, {"rule_1_to_0", fired_10}};

  std::optional<double> cost, efficiency;
  if (!rows.empty()) cost = llm::cost_index(totals, config.backend.pricing, rows.size());
  if (cost && *cost > 0.0 && !y.empty()) efficiency = eval::efficiency(out.prediction.severity_score, *cost);
  m["cost"] = {{"calls", totals.calls},
               {"prompt_tokens", totals.prompt_tokens},
               {"completion_tokens", totals.completion_tokens},
               {"wall_seconds", static_cast<double>(totals.wall_micros) / 1e6},
               {"retries", totals.retries},
               {"cost_idx", cost ? ordered_json(*cost) : ordered_json(nullptr)},
               {"efficiency", efficiency ? ordered_json(*efficiency) : ordered_json(nullptr)}};

  std::optional<double> acc, f1, sev;
  if (!y.empty()) {
    acc = out.prediction.overall_accuracy;
    f1 = out.prediction.macro_f1;
    sev = out.prediction.severity_score;
  }
  std::ostringstream t;
  t << "Configuration " << name << ": " << rows.size() << " test rows, " << failed << " failed\n\n";
  t << eval::format_table({"Accuracy", "Macro-F1", "Severity", "DamageAcc", "Recall_2"},
                          {{eval::format_metric(acc), eval::format_metric(f1), eval::format_metric(sev),
                            eval::format_metric(y.empty() ? std::nullopt : out.prediction.damage_class_accuracy),
                            eval::format_metric(y.empty() ? std::nullopt : out.prediction.recall_2)}});
  t << "\n";
  t << eval::format_table({"LRA", "SFC", "FDC", "PAS", "BTS"},
                          {{eval::format_metric(rm.lra), eval::format_metric(rm.sfc), eval::format_metric(rm.fdc),
                            eval::format_metric(rm.pas), eval::format_metric(rm.bts)}});
  t << "\n";
  t << eval::format_table({"Calls", "PromptTok", "CompletionTok", "CostIdx", "Efficiency"},
                          {{std::to_string(totals.calls), std::to_string(totals.prompt_tokens),
                            std::to_string(totals.completion_tokens), eval::format_metric(cost, 3),
                            eval::format_metric(efficiency, 1)}});
  out.text = t.str();
  return out;
}

std::string prefix_for(const std::string& stage, eval::AblationConfig c) {
  return stage + "/" + std::string(eval::ablation_name(c)) + "/";
}

}  // namespace

// ---------------------------------------------------------------------------
// Stages

StageResult cmd_profile(const RunConfig& config) {
  config.validate();
  write_common(config);
  const Paths p{config.output_dir};
  const auto train = load_records(config.train_path);
  const auto profile = divergence::build_profile(train, dictionary().predictor_keys(), config.divergence);
  write_file(p.profile(), divergence::profile_to_json(profile).dump(2) + "\n");
  write_file(p.profile_report(), divergence::profile_report(profile, dictionary()));
  StageResult r;
  r.rows = train.size();
  r.summary = "profile: " + std::to_string(train.size()) + " records, salient set of " +
              std::to_string(profile.salient_set.size()) + " features";
  return r;
}

StageResult cmd_textmode(const RunConfig& config) {
  config.validate();
  write_common(config);
  const Paths p{config.output_dir};
  const auto profile = read_profile(p);
  StageResult r;
  const auto train = load_records(config.train_path);
  r.rows += train.size();
  r.failed_rows += generate_textmodes(config, "train", train, profile);
  if (!config.test_path.empty()) {
    const auto test = load_records(config.test_path);
    r.rows += test.size();
    r.failed_rows += generate_textmodes(config, "test", test, profile);
  }
  r.summary = "textmode: " + std::to_string(r.rows) + " rows, " + std::to_string(r.failed_rows) + " failed";
  return r;
}

StageResult cmd_build_kb(const RunConfig& config) {
  config.validate();
  write_common(config);
  const Paths p{config.output_dir};
  const auto profile = read_profile(p);
  const auto train = load_records(config.train_path);
  const auto text_modes = ensure_textmodes(config, "train", train, profile);
  const auto records = by_id(train);

  StageResult r;
  std::vector<ordered_json> rejects;
  std::vector<prompt::KbReasoningItem> items;
  for (const auto& rec : train) {
    ++r.rows;
    auto tm = text_modes.find(rec.row_id);
    if (!rec.label || tm == text_modes.end()) {
      rejects.push_back({{"row_id", rec.row_id}, {"errors", {rec.label ? "no text mode" : "unlabeled record"}}});
      continue;
    }
    items.push_back({rec.row_id, tm->second, rec.label, rec.huc12});
  }

  std::vector<prompt::PromptBundle> bundles;
  for (const auto& b : chunk(items, config.batch_size)) bundles.push_back(prompt::build_kb_reasoning_prompt(b));
  const std::string prefix = "build-kb/";
  auto gw = make_gateway(config);
  auto results = run_batches<prompt::KbReasoningLine>(
      gw, bundles, prefix, config.max_reasks, [&](const std::string& response, const prompt::PromptBundle& bundle) {
        auto verdict = prompt::parse_kb_reasoning_batch(response, bundle.expected_rows);
        for (auto& [id, checked] : verdict.rows) {
          if (!checked.ok()) continue;
          auto audit = prompt::audit_kb_trajectory(checked.value->trajectory, *records.at(id).label);
          if (!audit.violations.empty()) {
            checked.violations = audit.violations;
            checked.value.reset();
          }
        }
        return verdict;
      });
  flush_gateway(config, gw, prefix);

  std::vector<kb::KbEntry> entries;
  for (const auto& item : items) {
    const auto& res = results.at(item.row_id);
    if (res.value) {
      entries.push_back(kb::make_entry(records.at(item.row_id), item.text_mode, res.value->trajectory));
    } else {
      rejects.push_back({{"row_id", item.row_id}, {"errors", res.errors}});
    }
  }
  std::sort(rejects.begin(), rejects.end(),
            [](const auto& a, const auto& b) { return a["row_id"].template get<std::int64_t>() < b["row_id"].template get<std::int64_t>(); });
  kb::write_kb(p.kb(), entries, dictionary());
  write_file(p.kb_rejects(), jsonl(rejects));
  r.failed_rows = rejects.size();
  r.summary = "build-kb: " + std::to_string(entries.size()) + " entries, " + std::to_string(rejects.size()) +
              " rejected";
  return r;
}

StageResult cmd_freeshots(const RunConfig& config) {
  config.validate();
  write_common(config);
  const Paths p{config.output_dir};
  const auto profile = read_profile(p);
  const auto entries = read_kb(p);
  const auto libraries = kb::build_libraries(entries, profile, {config.min_scope, config.epsilon});
  if (fs::exists(p.libraries())) fs::remove_all(p.libraries());
  fs::create_directories(p.libraries());
  std::vector<std::string> scopes;
  for (const auto& [scope, lib] : libraries) {
    write_file(p.libraries() / (scope + ".json"), kb::library_to_json(lib).dump(2) + "\n");
    scopes.push_back(scope + (lib.absent().empty() ? "" : " (" + std::to_string(lib.absent().size()) + " absent)"));
  }
  StageResult r;
  r.rows = entries.size();
  r.summary = "freeshots: " + std::to_string(libraries.size()) + " libraries: " + text::join(scopes, ", ");
  return r;
}

StageResult cmd_predict(const RunConfig& config) {
  config.validate();
  write_common(config);
  auto rows = run_predictions(config, config.ablation, prefix_for("predict", config.ablation));
  StageResult r;
  r.rows = rows.size();
  r.failed_rows = write_predictions(config.output_dir, rows);
  r.summary = "predict (" + std::string(eval::ablation_name(config.ablation)) + "): " + std::to_string(r.rows) +
              " rows, " + std::to_string(r.failed_rows) + " failed";
  return r;
}

StageResult cmd_evaluate(const RunConfig& config) {
  config.validate();
  write_common(config);
  const auto rows = read_predictions(config.output_dir);
  const auto name = std::string(eval::ablation_name(config.ablation));
  auto e = evaluate_rows(config, rows, name, prefix_for("predict", config.ablation));
  write_file(config.output_dir / "metrics.json", e.metrics.dump(2) + "\n");
  write_file(config.output_dir / "metrics.txt", e.text);
  StageResult r;
  r.rows = rows.size();
  r.failed_rows = e.metrics["n_failed"].get<std::size_t>();
  r.summary = e.text;
  return r;
}

StageResult cmd_ablation(const RunConfig& config) {
  config.validate();
  write_common(config);
  const fs::path root = config.output_dir / "ablation";
  StageResult r;
  ordered_json all = ordered_json::array();
  std::vector<std::vector<std::string>> table;
  std::vector<PredictionRow> third;
  for (auto which : eval::kAllAblations) {
    const auto name = std::string(eval::ablation_name(which));
    std::vector<PredictionRow> rows;
    std::string cost_prefix = prefix_for("ablation", which);
    if (which == eval::AblationConfig::kIV && !third.empty()) {
      // Same prompts as III; only the post-check differs.
      rows = third;
      decide(rows, true, config.downgrade);
      cost_prefix = prefix_for("ablation", eval::AblationConfig::kIII);
    } else {
      rows = run_predictions(config, which, cost_prefix);
    }
    if (which == eval::AblationConfig::kIII) third = rows;
    fs::create_directories(root / name);
    const auto failed = write_predictions(root / name, rows);
    auto e = evaluate_rows(config, rows, name, cost_prefix);
    write_file(root / name / "metrics.json", e.metrics.dump(2) + "\n");
    write_file(root / name / "metrics.txt", e.text);
    r.rows += rows.size();
    r.failed_rows += failed;
    all.push_back(e.metrics);
    const bool has = e.metrics["prediction"].is_object();
    auto metric = [&](std::optional<double> v) { return eval::format_metric(has ? v : std::nullopt); };
    table.push_back({name, metric(e.prediction.overall_accuracy), metric(e.prediction.macro_f1),
                     metric(e.prediction.severity_score), metric(e.prediction.damage_class_accuracy),
                     metric(e.prediction.recall_2),
                     std::to_string(e.metrics["downgrade"]["rule_2_to_1"].get<std::size_t>() +
                                    e.metrics["downgrade"]["rule_1_to_0"].get<std::size_t>())});
  }
  write_file(config.output_dir / "ablation.json", all.dump(2) + "\n");
  const auto text = eval::format_table(
      {"Config", "Accuracy", "Macro-F1", "Severity", "DamageAcc", "Recall_2", "Downgrades"}, table);
  write_file(config.output_dir / "ablation.txt", text);
  r.summary = text;
  return r;
}

StageResult run_all(const RunConfig& config) {
  StageResult total;
  std::vector<std::string> lines;
  for (auto stage : {cmd_profile, cmd_build_kb, cmd_freeshots, cmd_predict, cmd_evaluate}) {
    auto r = stage(config);
    total.failed_rows += r.failed_rows;
    total.rows = r.rows;
    lines.push_back(r.summary);
  }
  total.summary = text::join(lines, "\n");
  return total;
}

}  // namespace floodrag::pipeline
