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

#include "floodrag/prompt_forge.hpp"

#include <algorithm>
#include <array>
#include <set>
#include <sstream>

#include "floodrag/text_util.hpp"
#include "json.hpp"

namespace floodrag::prompt {

using nlohmann::json;
using nlohmann::ordered_json;

std::string_view kind_name(PromptKind k) {
  switch (k) {
    case PromptKind::kTextMode: return "text_mode";
    case PromptKind::kKbReasoning: return "kb_reasoning";
    case PromptKind::kPrediction: return "prediction";
  }
  return "?";
}

PromptKind kind_from_name(std::string_view s) {
  if (s == "text_mode") return PromptKind::kTextMode;
  if (s == "kb_reasoning") return PromptKind::kKbReasoning;
  if (s == "prediction") return PromptKind::kPrediction;
  throw Error("unknown prompt kind: " + std::string(s));
}

namespace {

struct CodeName {
  ViolationCode code;
  std::string_view name;
};

constexpr std::array kCodeNames = {
    CodeName{ViolationCode::kMalformedJson, "malformed_json"},
    CodeName{ViolationCode::kMissingKey, "missing_key"},
    CodeName{ViolationCode::kUnexpectedKey, "unexpected_key"},
    CodeName{ViolationCode::kRowIdMismatch, "row_id_mismatch"},
    CodeName{ViolationCode::kUnexpectedRow, "unexpected_row"},
    CodeName{ViolationCode::kDuplicateRow, "duplicate_row"},
    CodeName{ViolationCode::kMissingRow, "missing_row"},
    CodeName{ViolationCode::kWordLimit, "word_limit"},
    CodeName{ViolationCode::kPredictiveLanguage, "predictive_language"},
    CodeName{ViolationCode::kEmptyText, "empty_text"},
    CodeName{ViolationCode::kTagCase, "tag_case"},
    CodeName{ViolationCode::kMissingThink, "missing_think"},
    CodeName{ViolationCode::kMultipleThink, "multiple_think"},
    CodeName{ViolationCode::kUnclosedThink, "unclosed_think"},
    CodeName{ViolationCode::kMissingAnswer, "missing_answer"},
    CodeName{ViolationCode::kMultipleAnswer, "multiple_answer"},
    CodeName{ViolationCode::kUnclosedAnswer, "unclosed_answer"},
    CodeName{ViolationCode::kTagOrder, "tag_order"},
    CodeName{ViolationCode::kStrayContent, "stray_content"},
    CodeName{ViolationCode::kEmptyThink, "empty_think"},
    CodeName{ViolationCode::kBadAnswerToken, "bad_answer_token"},
    CodeName{ViolationCode::kBadLabel, "bad_label"},
    CodeName{ViolationCode::kLabelAnswerMismatch, "label_answer_mismatch"},
    CodeName{ViolationCode::kDespiteCount, "despite_count"},
    CodeName{ViolationCode::kMissingClosingPhrase, "missing_closing_phrase"},
    CodeName{ViolationCode::kMissingOccurrencePhrase, "missing_occurrence_phrase"},
    CodeName{ViolationCode::kMissingSeverityPhrase, "missing_severity_phrase"},
    CodeName{ViolationCode::kForbiddenSeverityClaim, "forbidden_severity_claim"},
    CodeName{ViolationCode::kAnswerMismatch, "answer_mismatch"},
};

}  // namespace

std::string_view violation_name(ViolationCode code) {
  for (const auto& cn : kCodeNames) {
    if (cn.code == code) return cn.name;
  }
  return "unknown";
}

const std::vector<ViolationCode>& all_violation_codes() {
  static const std::vector<ViolationCode> codes = [] {
    std::vector<ViolationCode> v;
    for (const auto& cn : kCodeNames) v.push_back(cn.code);
    return v;
  }();
  return codes;
}

std::string describe(const std::vector<Violation>& violations) {
  std::vector<std::string> parts;
  parts.reserve(violations.size());
  for (const auto& v : violations) {
    std::string s(violation_name(v.code));
    if (!v.detail.empty()) s += " (" + v.detail + ")";
    parts.push_back(std::move(s));
  }
  return text::join(parts, "; ");
}

bool contains(const std::vector<Violation>& violations, ViolationCode code) {
  return std::any_of(violations.begin(), violations.end(), [&](const Violation& v) { return v.code == code; });
}

// ---------------------------------------------------------------------------
// Trajectories

namespace {

constexpr std::array<std::string_view, 4> kTags = {"<think>", "</think>", "<answer>", "</answer>"};

std::size_t count_of(std::string_view hay, std::string_view needle) {
  std::size_t n = 0;
  for (auto pos = hay.find(needle); pos != std::string_view::npos; pos = hay.find(needle, pos + needle.size())) ++n;
  return n;
}

}  // namespace

Checked<Trajectory> parse_trajectory(std::string_view raw) {
  Checked<Trajectory> out;
  auto& v = out.violations;

  // Tag spellings other than lowercase are reported once, then normalized so
  // the structural checks below see the intended shape.
  std::string norm(raw);
  const std::string lowered = text::to_lower(raw);
  for (auto tag : kTags) {
    for (auto pos = lowered.find(tag); pos != std::string::npos; pos = lowered.find(tag, pos + tag.size())) {
      if (std::string_view(norm).substr(pos, tag.size()) != tag) {
        if (!contains(v, ViolationCode::kTagCase)) v.push_back({ViolationCode::kTagCase, "tag names must be lowercase"});
        norm.replace(pos, tag.size(), tag);
      }
    }
  }

  const auto n_open_think = count_of(norm, "<think>");
  const auto n_close_think = count_of(norm, "</think>");
  const auto n_open_answer = count_of(norm, "<answer>");
  const auto n_close_answer = count_of(norm, "</answer>");
  if (n_open_think == 0) v.push_back({ViolationCode::kMissingThink, "no <think> block"});
  if (n_open_think > 1) v.push_back({ViolationCode::kMultipleThink, std::to_string(n_open_think) + " <think> blocks"});
  if (n_open_think >= 1 && n_close_think != n_open_think) v.push_back({ViolationCode::kUnclosedThink, "unbalanced </think>"});
  if (n_open_answer == 0) v.push_back({ViolationCode::kMissingAnswer, "no <answer> block"});
  if (n_open_answer > 1) v.push_back({ViolationCode::kMultipleAnswer, std::to_string(n_open_answer) + " <answer> blocks"});
  if (n_open_answer >= 1 && n_close_answer != n_open_answer) v.push_back({ViolationCode::kUnclosedAnswer, "unbalanced </answer>"});

  if (n_open_think == 1 && n_close_think == 1 && n_open_answer == 1 && n_close_answer == 1) {
    const auto ot = norm.find("<think>");
    const auto ct = norm.find("</think>");
    const auto oa = norm.find("<answer>");
    const auto ca = norm.find("</answer>");
    if (!(ot < ct && ct < oa && oa < ca)) {
      v.push_back({ViolationCode::kTagOrder, "expected <think>...</think><answer>...</answer>"});
    } else {
      if (ot != 0) v.push_back({ViolationCode::kStrayContent, "content before <think>"});
      if (ca + 9 != norm.size()) v.push_back({ViolationCode::kStrayContent, "content after </answer>"});
      if (oa != ct + 8) v.push_back({ViolationCode::kStrayContent, "content between </think> and <answer>"});
      const std::string think = norm.substr(ot + 7, ct - ot - 7);
      const std::string answer = norm.substr(oa + 8, ca - oa - 8);
      if (text::trim(think).empty()) v.push_back({ViolationCode::kEmptyThink, "empty <think>"});
      if (answer != "0" && answer != "1" && answer != "2") {
        v.push_back({ViolationCode::kBadAnswerToken, "answer must be exactly 0, 1 or 2, got \"" + answer + "\""});
      }
      if (v.empty()) out.value = Trajectory{think, category_from_int(answer[0] - '0'), std::string(raw)};
    }
  }
  return out;
}

std::string render_trajectory(std::string_view think, PdeCategory answer) {
  std::string s = "<think>";
  s += think;
  s += "</think><answer>";
  s += std::to_string(to_int(answer));
  s += "</answer>";
  return s;
}

TrajectoryAudit audit_kb_trajectory(const Trajectory& t, PdeCategory ground_truth) {
  TrajectoryAudit a;
  // Re-checks the raw form so an audit of a hand-built Trajectory is honest.
  const auto reparsed = parse_trajectory(t.raw.empty() ? render_trajectory(t.think, t.answer) : t.raw);
  a.has_single_think_answer = reparsed.ok();
  if (!reparsed.ok()) {
    a.violations = reparsed.violations;
  }

  for (const auto& sentence : text::split_sentences(t.think)) {
    if (text::starts_with(sentence, "Despite")) ++a.despite_count;
  }
  a.has_closing_phrase = t.think.find(kClosingPhrase) != std::string::npos;
  a.has_occurrence_phrase = t.think.find(kOccurrencePhrase) != std::string::npos;
  a.has_severity_phrase = t.think.find(kSeverityPhrase) != std::string::npos;
  a.answer_matches_ground_truth = t.answer == ground_truth;

  if (a.despite_count != 1) {
    a.violations.push_back({ViolationCode::kDespiteCount,
                            "expected exactly one sentence starting with \"Despite\", found " +
                                std::to_string(a.despite_count)});
  }
  if (!a.has_closing_phrase) a.violations.push_back({ViolationCode::kMissingClosingPhrase, std::string(kClosingPhrase)});
  if (!a.has_occurrence_phrase) {
    a.violations.push_back({ViolationCode::kMissingOccurrencePhrase, std::string(kOccurrencePhrase)});
  }
  if (ground_truth == PdeCategory::kLow) {
    if (a.has_severity_phrase) {
      a.violations.push_back({ViolationCode::kForbiddenSeverityClaim, "class 0 must not resolve severity"});
    }
  } else if (!a.has_severity_phrase) {
    a.violations.push_back({ViolationCode::kMissingSeverityPhrase, std::string(kSeverityPhrase)});
  }
  if (!*a.answer_matches_ground_truth) {
    a.violations.push_back({ViolationCode::kAnswerMismatch, "answer " + std::to_string(to_int(t.answer)) +
                                                                 " != ground truth " +
                                                                 std::to_string(to_int(ground_truth))});
  }
  return a;
}

// ---------------------------------------------------------------------------
// JSON line helpers

namespace {

constexpr std::string_view kInputBegin = "=== INPUT JSONL ===";
constexpr std::string_view kInputEnd = "=== END INPUT ===";

/// Parses the first JSON value on the line; trailing text is reported.
std::optional<json> parse_line(std::string_view line, std::vector<Violation>& v) {
  const auto trimmed = text::trim(line);
  if (trimmed.empty() || trimmed.front() != '{') {
    v.push_back({ViolationCode::kMalformedJson, "line is not a JSON object"});
    return std::nullopt;
  }
  std::istringstream in{std::string(trimmed)};
  json j;
  try {
    in >> j;
  } catch (const json::exception& e) {
    v.push_back({ViolationCode::kMalformedJson, e.what()});
    return std::nullopt;
  }
  std::string rest((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  if (!text::trim(rest).empty()) v.push_back({ViolationCode::kStrayContent, "text after the JSON object"});
  if (!j.is_object()) {
    v.push_back({ViolationCode::kMalformedJson, "line is not a JSON object"});
    return std::nullopt;
  }
  return j;
}

bool check_keys(const json& j, std::initializer_list<std::string_view> keys, std::vector<Violation>& v) {
  bool all = true;
  for (auto k : keys) {
    if (!j.contains(std::string(k))) {
      v.push_back({ViolationCode::kMissingKey, std::string(k)});
      all = false;
    }
  }
  for (auto it = j.begin(); it != j.end(); ++it) {
    if (std::find(keys.begin(), keys.end(), it.key()) == keys.end()) {
      v.push_back({ViolationCode::kUnexpectedKey, it.key()});
    }
  }
  return all;
}

std::optional<std::int64_t> integer_field(const json& j, const char* key) {
  const auto& f = j.at(key);
  if (f.is_number_integer() || f.is_number_unsigned()) return f.get<std::int64_t>();
  return std::nullopt;
}

std::vector<std::string_view> nonempty_lines(std::string_view s) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  while (start < s.size()) {
    auto end = s.find('\n', start);
    if (end == std::string_view::npos) end = s.size();
    auto line = text::trim(s.substr(start, end - start));
    if (!line.empty()) out.push_back(line);
    start = end + 1;
  }
  return out;
}

/// Splits a JSONL response into per-row lines using each line's row_id.
template <class T, class Fn>
BatchVerdict<T> parse_batch(std::string_view response, const std::vector<std::int64_t>& expected, Fn&& parse_row) {
  BatchVerdict<T> verdict;
  const std::set<std::int64_t> wanted(expected.begin(), expected.end());
  for (auto line : nonempty_lines(response)) {
    std::vector<Violation> scratch;
    auto j = parse_line(line, scratch);
    std::optional<std::int64_t> id;
    if (j && j->contains("row_id")) id = integer_field(*j, "row_id");
    if (!id) {
      verdict.batch_violations.push_back(
          {ViolationCode::kStrayContent, "unattributable line: " + std::string(line.substr(0, 60))});
      continue;
    }
    if (wanted.count(*id) == 0) {
      verdict.batch_violations.push_back({ViolationCode::kUnexpectedRow, "row " + std::to_string(*id)});
      continue;
    }
    if (verdict.rows.count(*id) != 0) {
      verdict.batch_violations.push_back({ViolationCode::kDuplicateRow, "row " + std::to_string(*id)});
      verdict.rows[*id].value.reset();
      verdict.rows[*id].violations.push_back({ViolationCode::kDuplicateRow, "row answered twice"});
      continue;
    }
    verdict.rows[*id] = parse_row(line, *id);
  }
  for (auto id : expected) {
    if (verdict.rows.count(id) == 0) {
      verdict.missing_rows.push_back(id);
      verdict.batch_violations.push_back({ViolationCode::kMissingRow, "row " + std::to_string(id)});
    }
  }
  return verdict;
}

ordered_json feature_value(const Record& r, const std::string& key) {
  auto v = r.value(key);
  return v ? ordered_json(*v) : ordered_json(nullptr);
}

std::string legend(const VariableDictionary& dictionary, const std::vector<std::string>& keys) {
  std::vector<std::string> parts;
  for (const auto& key : keys) {
    const auto* e = dictionary.find(key);
    if (e == nullptr) {
      parts.push_back(key);
      continue;
    }
    std::string s = key + ": " + e->full_name;
    if (!e->unit.empty()) s += " (" + e->unit + ")";
    parts.push_back(std::move(s));
  }
  return text::join(parts, "; ");
}

std::string input_block(const std::vector<std::string>& lines) {
  std::string s(kInputBegin);
  s += '\n';
  for (const auto& l : lines) {
    s += l;
    s += '\n';
  }
  s += kInputEnd;
  return s;
}

}  // namespace

std::vector<std::string> input_lines(const PromptBundle& bundle) {
  std::vector<std::string> out;
  const auto begin = bundle.user.find(kInputBegin);
  if (begin == std::string::npos) return out;
  const auto end = bundle.user.find(kInputEnd, begin);
  const auto body = std::string_view(bundle.user).substr(begin + kInputBegin.size(),
                                                         (end == std::string::npos ? bundle.user.size() : end) -
                                                             begin - kInputBegin.size());
  for (auto line : nonempty_lines(body)) out.emplace_back(line);
  return out;
}

// ---------------------------------------------------------------------------
// Text mode

PromptBundle build_text_mode_prompt(const std::vector<Record>& records, const std::vector<std::string>& ordered_features,
                                    const VariableDictionary& dictionary) {
  if (records.empty()) throw std::invalid_argument("build_text_mode_prompt: empty record batch");
  PromptBundle b;
  b.kind = PromptKind::kTextMode;
  b.system =
      "Convert tabular rows into a concise human-readable text_mode. "
      "Output STRICT JSONL, one line per row: {\"row_id\":<int>, \"text_mode\":\"<string>\"}. "
      "No extra text.";

  std::vector<std::string> lines;
  for (const auto& r : records) {
    ordered_json j;
    j["row_id"] = r.row_id;
    for (const auto& key : ordered_features) j[key] = feature_value(r, key);
    lines.push_back(j.dump());
    b.expected_rows.push_back(r.row_id);
  }
  b.user = "Write a ≤120-word paragraph that only paraphrases feature values. ";
  b.user += "Follow order: [" + text::join(ordered_features, ", ") + "]. ";
  b.user += "Do not infer risk or predict. Skip NULL or trivial zeros. Use units from the legend when useful. ";
  b.user += "Keep numbers compact. Input legend: [" + legend(dictionary, ordered_features) + "]. ";
  b.user += "Input JSONL:\n" + input_block(lines);
  return b;
}

Checked<std::string> validate_text_mode(std::string_view response_line, const Record& record,
                                        const TextModeRules& rules) {
  Checked<std::string> out;
  auto& v = out.violations;
  auto j = parse_line(response_line, v);
  if (!j) return out;
  if (!check_keys(*j, {"row_id", "text_mode"}, v)) return out;
  const auto id = integer_field(*j, "row_id");
  if (!id || *id != record.row_id) {
    v.push_back({ViolationCode::kRowIdMismatch, "expected row " + std::to_string(record.row_id)});
  }
  if (!j->at("text_mode").is_string()) {
    v.push_back({ViolationCode::kMalformedJson, "text_mode must be a string"});
    return out;
  }
  const auto tm = j->at("text_mode").get<std::string>();
  if (text::trim(tm).empty()) v.push_back({ViolationCode::kEmptyText, "empty text_mode"});
  const auto words = text::word_count(tm);
  if (words > rules.max_words) {
    v.push_back({ViolationCode::kWordLimit, std::to_string(words) + " words > " + std::to_string(rules.max_words)});
  }
  const auto lowered = text::to_lower(tm);
  for (const auto& term : rules.denylist) {
    if (lowered.find(text::to_lower(term)) != std::string::npos) {
      v.push_back({ViolationCode::kPredictiveLanguage, term});
    }
  }
  if (v.empty()) out.value = tm;
  return out;
}

BatchVerdict<std::string> validate_text_mode_batch(std::string_view response, const std::vector<Record>& expected,
                                                   const TextModeRules& rules) {
  std::map<std::int64_t, const Record*> by_id;
  std::vector<std::int64_t> ids;
  for (const auto& r : expected) {
    by_id[r.row_id] = &r;
    ids.push_back(r.row_id);
  }
  return parse_batch<std::string>(response, ids, [&](std::string_view line, std::int64_t id) {
    return validate_text_mode(line, *by_id.at(id), rules);
  });
}

// ---------------------------------------------------------------------------
// Knowledge-base reasoning

PromptBundle build_kb_reasoning_prompt(const std::vector<KbReasoningItem>& items) {
  if (items.empty()) throw std::invalid_argument("build_kb_reasoning_prompt: empty entry list");
  PromptBundle b;
  b.kind = PromptKind::kKbReasoning;
  b.system =
      "You are an expert flood risk analyst.\n"
      "Task: For each input item, output STRICT JSONL with exactly one line: "
      "{\"row_id\":<int>, \"r1\":\"<think>...</think><answer>...</answer>\"}.\n"
      "Format rules: r1 contains exactly one <think> block immediately followed by one <answer> block. "
      "Tag names are lowercase. Nothing before <think> or after </answer>. "
      "The content of <answer> is exactly one of \"0\", \"1\", \"2\". "
      "Output is valid single-line JSON with no trailing commas.\n"
      "Reasoning rules: use only the provided text_mode and the given ground_truth. Write about 200 words. "
      "Apply a two-stage structure: first occurrence (class 0 versus classes 1 or 2), then severity "
      "(class 1 versus class 2 when the outcome is nonzero). For occurrence, focus on structural, exposure, and "
      "history cues such as stream proximity, foundation height, building density or imperviousness, prior claims, "
      "and elevation. Rainfall intensity alone must not force a nonzero occurrence. Imperviousness or prior claims "
      "can support nonzero, but they do not overrule strong protection cues such as higher elevation or a raised "
      "foundation if text_mode frames them as protective. For severity, discuss rainfall intensity, duration and "
      "accumulation, local drainage such as HAND or elevation, and vulnerability such as FAR or low clearance. "
      "Use the exact phrases \"occurrence resolves to ...\" and \"severity resolves to ...\" when applicable. "
      "Include exactly one sentence that begins with \"Despite\" to resolve conflicts. End <think> with "
      "\"Based on these factors, it is reasonable to claim PDE_category is X.\". The content of <answer> must "
      "equal the provided ground_truth. If <answer> is \"0\", do not claim \"severity resolves to ...\"; you may "
      "state a conditional sentence about severity.";

  std::vector<std::string> lines;
  for (const auto& item : items) {
    if (!item.ground_truth) {
      throw std::invalid_argument("build_kb_reasoning_prompt: row " + std::to_string(item.row_id) + " has no label");
    }
    if (text::trim(item.text_mode).empty()) {
      throw std::invalid_argument("build_kb_reasoning_prompt: row " + std::to_string(item.row_id) +
                                  " has an empty text_mode");
    }
    ordered_json j;
    j["row_id"] = item.row_id;
    j["text_mode"] = item.text_mode;
    j["ground_truth"] = to_int(*item.ground_truth);
    j["huc12"] = item.huc12;
    lines.push_back(j.dump());
    b.expected_rows.push_back(item.row_id);
  }
  b.user =
      "For each item you will receive text_mode, ground_truth where 0=L, 1=M, 2=H, and huc12.\n"
      "Write a single <think>...</think> block followed immediately by a single <answer>...</answer> block, "
      "following the rules above. Include one conflict sentence that starts with \"Despite\". Conclude the "
      "<think> block with \"Based on these factors, it is reasonable to claim PDE_category is X.\". Ensure that "
      "<answer> exactly matches ground_truth (\"0\", \"1\", or \"2\").\n"
      "Finally, output STRICT JSONL with no extra lines or commentary: "
      "{\"row_id\":<int>, \"r1\":\"<think>...</think><answer>...</answer>\"}.\n"
      "Inputs:\n" +
      input_block(lines);
  return b;
}

Checked<KbReasoningLine> parse_kb_reasoning(std::string_view response_line) {
  Checked<KbReasoningLine> out;
  auto& v = out.violations;
  auto j = parse_line(response_line, v);
  if (!j) return out;
  if (!check_keys(*j, {"row_id", "r1"}, v)) return out;
  const auto id = integer_field(*j, "row_id");
  if (!id) v.push_back({ViolationCode::kMalformedJson, "row_id must be an integer"});
  if (!j->at("r1").is_string()) {
    v.push_back({ViolationCode::kMalformedJson, "r1 must be a string"});
    return out;
  }
  auto t = parse_trajectory(j->at("r1").get<std::string>());
  v.insert(v.end(), t.violations.begin(), t.violations.end());
  if (v.empty() && t.value) out.value = KbReasoningLine{*id, std::move(*t.value)};
  return out;
}

BatchVerdict<KbReasoningLine> parse_kb_reasoning_batch(std::string_view response,
                                                       const std::vector<std::int64_t>& expected_rows) {
  return parse_batch<KbReasoningLine>(response, expected_rows,
                                      [](std::string_view line, std::int64_t) { return parse_kb_reasoning(line); });
}

// ---------------------------------------------------------------------------
// Prediction

std::string prediction_input_line(const PredictionItem& item) {
  ordered_json j;
  j["row_id"] = item.target.row_id;
  j["target"] = {{"text_mode", item.target.text_mode}, {"x", item.target.x}, {"y", item.target.y}};
  ordered_json neighbors = ordered_json::array();
  for (const auto& n : item.neighbors) {
    ordered_json o;
    o["n_label"] = to_int(n.label);
    o["n_text_mode"] = n.text_mode;
    o["n_reasoning"] = n.reasoning;
    o["distance_km"] = n.distance_km;
    o["within_1km"] = true;
    o["rank"] = n.rank;
    neighbors.push_back(std::move(o));
  }
  j["neighbors"] = std::move(neighbors);
  ordered_json shots = ordered_json::array();
  for (const auto& s : item.free_shots) {
    ordered_json o;
    o["type"] = s.prototype ? "prototype" : "hard_example";
    o["PDE_category"] = to_int(s.level);
    o["text_mode"] = s.text_mode;
    o["reasoning"] = s.reasoning;
    o["why_selected"] = s.why_selected;
    shots.push_back(std::move(o));
  }
  j["free_shots"] = std::move(shots);
  return j.dump();
}

PromptBundle build_prediction_prompt(const std::vector<PredictionItem>& items, std::string_view downgrade_rule) {
  if (items.empty()) throw std::invalid_argument("build_prediction_prompt: empty item list");
  PromptBundle b;
  b.kind = PromptKind::kPrediction;
  b.system =
      "You are an expert flood risk analyst.\n"
      "Task: For each item, predict PDE_category ∈ {0,1,2} using only the provided fields. Neighbors within one "
      "kilometer are weighted by distance and rank. Use free-shots only as few-shot guidance when the number of "
      "neighbors is less than three.\n"
      "Allowed inputs: target text_mode; up to three neighbors (each with text_mode, reasoning, distance_km, rank); "
      "conditional free-shots (prototypes and hard examples). No external knowledge.\n"
      "Output format: STRICT JSONL, exactly one line per item: "
      "{\"row_id\":<int>, \"pred_label\":<0|1|2>, \"r1\":\"<think>...</think><answer>...</answer>\"}. "
      "Keep <think> concise, about two hundred words. The <answer> tag is only one of 0, 1, 2. If no neighbors are "
      "available, state this in <think> and rely on the target and the free-shots.\n"
      "Downgrade rule: When the prediction in <answer> contradicts the narrative evidence in <think>, adjust "
      "pred_label according to [DOWNGRADE_RULE] while keeping <think> faithful to the inputs.\n"
      "DOWNGRADE_RULE:\n";
  b.system += downgrade_rule;

  std::vector<std::string> lines;
  for (const auto& item : items) {
    lines.push_back(prediction_input_line(item));
    b.expected_rows.push_back(item.target.row_id);
  }
  b.user =
      "For each JSON line, understand the target from its text_mode and coordinates, then compare it against "
      "labeled neighbors and optional free-shots.\n"
      "Treat neighbors with smaller distance_km and lower rank as more influential examples. Use free-shots mainly "
      "as prototypes or boundary cases when local neighbor evidence is sparse or ambiguous.\n"
      "In <think>, explain how the target resembles or differs from neighbors and free-shots, then apply the "
      "downgrade rule if the narrative evidence and the final label would otherwise be inconsistent.\n" +
      input_block(lines) +
      "\nEach JSON line contains:\n"
      "  \"row_id\":<int>,\n"
      "  \"target\":{\"text_mode\":<string>,\"x\":<float>,\"y\":<float>},\n"
      "  \"neighbors\":[{\"n_label\":<0|1|2>, \"n_text_mode\":<string>, \"n_reasoning\":<string>, "
      "\"distance_km\":<float>, \"within_1km\":true, \"rank\":<int>}, ...],\n"
      "  \"free_shots\":[{\"type\":\"prototype\"|\"hard_example\", \"PDE_category\":<0|1|2>, "
      "\"text_mode\":<string>, \"reasoning\":<string>, \"why_selected\":<string>}, ...]\n"
      "Return STRICT JSONL with no extra lines or commentary: "
      "{\"row_id\":<int>, \"pred_label\":<0|1|2>, \"r1\":\"<think>...</think><answer>...</answer>\"}.";
  return b;
}

Checked<PredictionLine> parse_prediction(std::string_view response_line) {
  Checked<PredictionLine> out;
  auto& v = out.violations;
  auto j = parse_line(response_line, v);
  if (!j) return out;
  if (!check_keys(*j, {"row_id", "pred_label", "r1"}, v)) return out;
  const auto id = integer_field(*j, "row_id");
  if (!id) v.push_back({ViolationCode::kMalformedJson, "row_id must be an integer"});
  std::optional<PdeCategory> label;
  if (auto raw_label = integer_field(*j, "pred_label"); raw_label && *raw_label >= 0 && *raw_label <= 2) {
    label = category_from_int(*raw_label);
  } else {
    v.push_back({ViolationCode::kBadLabel, "pred_label must be the integer 0, 1 or 2"});
  }
  if (!j->at("r1").is_string()) {
    v.push_back({ViolationCode::kMalformedJson, "r1 must be a string"});
    return out;
  }
  auto t = parse_trajectory(j->at("r1").get<std::string>());
  v.insert(v.end(), t.violations.begin(), t.violations.end());
  if (label && t.value && *label != t.value->answer) {
    v.push_back({ViolationCode::kLabelAnswerMismatch, "pred_label " + std::to_string(to_int(*label)) +
                                                          " != answer " + std::to_string(to_int(t.value->answer))});
  }
  if (v.empty()) out.value = PredictionLine{*id, *label, std::move(*t.value)};
  return out;
}

BatchVerdict<PredictionLine> parse_prediction_batch(std::string_view response,
                                                    const std::vector<std::int64_t>& expected_rows) {
  return parse_batch<PredictionLine>(response, expected_rows,
                                     [](std::string_view line, std::int64_t) { return parse_prediction(line); });
}

}  // namespace floodrag::prompt
