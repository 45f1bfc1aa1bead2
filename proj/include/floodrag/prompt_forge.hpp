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

// Prompt templates for the three LLM tasks (text mode, knowledge-base
// reasoning, prediction) and strict validators for their responses.
//
// Every validator is pure and reports problems as values drawn from
// ViolationCode; nothing here throws on malformed model output.

#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "floodrag/core_model.hpp"

namespace floodrag::prompt {

enum class PromptKind { kTextMode, kKbReasoning, kPrediction };
std::string_view kind_name(PromptKind k);
PromptKind kind_from_name(std::string_view s);

struct PromptBundle {
  std::string system;
  std::string user;
  std::vector<std::int64_t> expected_rows;
  PromptKind kind = PromptKind::kTextMode;

  bool operator==(const PromptBundle&) const = default;
};

/// Closed set of response-contract violations.
enum class ViolationCode {
  kMalformedJson,
  kMissingKey,
  kUnexpectedKey,
  kRowIdMismatch,
  kUnexpectedRow,
  kDuplicateRow,
  kMissingRow,
  kWordLimit,
  kPredictiveLanguage,
  kEmptyText,
  kTagCase,
  kMissingThink,
  kMultipleThink,
  kUnclosedThink,
  kMissingAnswer,
  kMultipleAnswer,
  kUnclosedAnswer,
  kTagOrder,
  kStrayContent,
  kEmptyThink,
  kBadAnswerToken,
  kBadLabel,
  kLabelAnswerMismatch,
  kDespiteCount,
  kMissingClosingPhrase,
  kMissingOccurrencePhrase,
  kMissingSeverityPhrase,
  kForbiddenSeverityClaim,
  kAnswerMismatch,
};

std::string_view violation_name(ViolationCode code);
/// All codes, in declaration order.
const std::vector<ViolationCode>& all_violation_codes();

struct Violation {
  ViolationCode code;
  std::string detail;

  bool operator==(const Violation&) const = default;
};

std::string describe(const std::vector<Violation>& violations);
bool contains(const std::vector<Violation>& violations, ViolationCode code);

/// A value or the reasons it was rejected.
template <class T>
struct Checked {
  std::optional<T> value;
  std::vector<Violation> violations;

  bool ok() const { return value.has_value() && violations.empty(); }
};

// ---------------------------------------------------------------------------
// Trajectories

struct Trajectory {
  std::string think;
  PdeCategory answer = PdeCategory::kLow;
  std::string raw;

  bool operator==(const Trajectory&) const = default;
};

/// Strict `<think>...</think><answer>d</answer>` parse.
Checked<Trajectory> parse_trajectory(std::string_view raw);
std::string render_trajectory(std::string_view think, PdeCategory answer);

inline constexpr std::string_view kClosingPhrase = "Based on these factors, it is reasonable to claim PDE_category is";
inline constexpr std::string_view kOccurrencePhrase = "occurrence resolves to";
inline constexpr std::string_view kSeverityPhrase = "severity resolves to";

struct TrajectoryAudit {
  bool has_single_think_answer = false;
  int despite_count = 0;
  bool has_closing_phrase = false;
  bool has_occurrence_phrase = false;
  bool has_severity_phrase = false;
  std::optional<bool> answer_matches_ground_truth;
  std::vector<Violation> violations;

  bool clean() const { return violations.empty(); }
};

/// Checks a parsed knowledge-base trajectory against the reasoning template.
TrajectoryAudit audit_kb_trajectory(const Trajectory& t, PdeCategory ground_truth);

// ---------------------------------------------------------------------------
// Text mode

struct TextModeRules {
  std::size_t max_words = 120;
  std::vector<std::string> denylist = {"predict", "risk is", "PDE_category is", "likely damage"};
};

PromptBundle build_text_mode_prompt(const std::vector<Record>& records, const std::vector<std::string>& ordered_features,
                                    const VariableDictionary& dictionary);

/// One response line `{"row_id":..,"text_mode":..}` checked against `record`.
Checked<std::string> validate_text_mode(std::string_view response_line, const Record& record,
                                        const TextModeRules& rules = {});

// ---------------------------------------------------------------------------
// Knowledge-base reasoning

struct KbReasoningItem {
  std::int64_t row_id = 0;
  std::string text_mode;
  std::optional<PdeCategory> ground_truth;
  std::string huc12;
};

PromptBundle build_kb_reasoning_prompt(const std::vector<KbReasoningItem>& items);

struct KbReasoningLine {
  std::int64_t row_id = 0;
  Trajectory trajectory;
};

/// `{"row_id":..,"r1":..}` with a strictly parsed trajectory.
Checked<KbReasoningLine> parse_kb_reasoning(std::string_view response_line);

// ---------------------------------------------------------------------------
// Prediction

struct PredictionTarget {
  std::int64_t row_id = 0;
  std::string text_mode;
  double x = 0.0;
  double y = 0.0;
};

struct NeighborView {
  PdeCategory label = PdeCategory::kLow;
  std::string text_mode;
  std::string reasoning;
  double distance_km = 0.0;
  int rank = 1;
};

struct FreeShotView {
  bool prototype = true;
  PdeCategory level = PdeCategory::kLow;
  std::string text_mode;
  std::string reasoning;
  std::string why_selected;
};

struct PredictionItem {
  PredictionTarget target;
  std::vector<NeighborView> neighbors;
  std::vector<FreeShotView> free_shots;
};

/// The per-item INPUT_JSONL line.
std::string prediction_input_line(const PredictionItem& item);

PromptBundle build_prediction_prompt(const std::vector<PredictionItem>& items, std::string_view downgrade_rule);

struct PredictionLine {
  std::int64_t row_id = 0;
  PdeCategory pred_label = PdeCategory::kLow;
  Trajectory trajectory;
};

Checked<PredictionLine> parse_prediction(std::string_view response_line);

// ---------------------------------------------------------------------------
// Multi-line responses

/// Per-row outcome of a batched JSONL response. Lines that cannot be
/// attributed to a row land in `batch_violations`.
template <class T>
struct BatchVerdict {
  std::map<std::int64_t, Checked<T>> rows;
  std::vector<Violation> batch_violations;
  std::vector<std::int64_t> missing_rows;

  /// Every violation, flattened; empty iff the whole response is valid.
  std::vector<Violation> all_violations() const {
    auto out = batch_violations;
    for (const auto& [id, c] : rows) {
      for (const auto& v : c.violations) out.push_back({v.code, "row " + std::to_string(id) + ": " + v.detail});
    }
    return out;
  }
};

BatchVerdict<std::string> validate_text_mode_batch(std::string_view response, const std::vector<Record>& expected,
                                                   const TextModeRules& rules = {});
BatchVerdict<KbReasoningLine> parse_kb_reasoning_batch(std::string_view response,
                                                       const std::vector<std::int64_t>& expected_rows);
BatchVerdict<PredictionLine> parse_prediction_batch(std::string_view response,
                                                    const std::vector<std::int64_t>& expected_rows);

/// JSON lines between the INPUT_JSONL markers of a bundle built here.
std::vector<std::string> input_lines(const PromptBundle& bundle);

}  // namespace floodrag::prompt
