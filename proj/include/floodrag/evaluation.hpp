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

// Prediction metrics over ordinal labels and rationale metrics over
// <think> text: label agreement, salient-feature coverage, direction
// consistency, prototype alignment and boundary tradeoffs.

#pragma once

#include <array>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "floodrag/core_model.hpp"
#include "floodrag/downgrade.hpp"
#include "floodrag/knowledge_base.hpp"
#include "floodrag/prompt_forge.hpp"
#include "json.hpp"

namespace floodrag::eval {

/// Mean of 1 - |y - yhat| / 2. Throws std::invalid_argument on empty or
/// mismatched input.
double severity_score(const std::vector<PdeCategory>& y, const std::vector<PdeCategory>& yhat);

struct PredictionMetrics {
  std::size_t n = 0;
  double overall_accuracy = 0.0;
  double macro_f1 = 0.0;
  double severity_score = 0.0;
  /// Accuracy over y in {1, 2}; absent when no such sample exists.
  std::optional<double> damage_class_accuracy;
  /// Absent when class 2 never occurs in y.
  std::optional<double> recall_2;
  std::array<double, 3> per_class_f1{};
  /// confusion[true][predicted]
  std::array<std::array<std::size_t, 3>, 3> confusion{};
};

PredictionMetrics classification_metrics(const std::vector<PdeCategory>& y, const std::vector<PdeCategory>& yhat);

/// Label implied by the rationale text: closing phrase, then "severity
/// resolves to", then "occurrence resolves to 0". Absent when none applies.
std::optional<PdeCategory> implied_label(std::string_view think);

/// 1 when the implied label (or the answer tag, if none) equals `pred`.
int lra(const prompt::Trajectory& t, PdeCategory pred);

/// Predictor keys whose aliases or full name appear in `text`.
std::set<std::string> mentioned_features(std::string_view text, const VariableDictionary& dictionary);

/// |mentioned ∩ salient| / |salient|. Throws std::invalid_argument when
/// `salient` is empty.
double sfc(std::string_view think, const std::set<std::string>& salient, const VariableDictionary& dictionary);

enum class Magnitude { kLow, kMiddle, kHigh };

struct Terciles {
  double lower = 0.0;
  double upper = 0.0;
  Magnitude classify(double v) const;
};

/// Per-feature 1/3 and 2/3 quantiles (linear interpolation) over records
/// carrying the feature.
std::map<std::string, Terciles> compute_terciles(const std::vector<Record>& records,
                                                 const std::vector<std::string>& features);

struct DirectionalMention {
  std::string feature;
  std::string adjective;
  Magnitude stated = Magnitude::kMiddle;
  std::optional<RiskDirection> stated_direction;
  bool consistent = false;
};

struct FdcResult {
  double score = 1.0;
  std::vector<DirectionalMention> mentions;
};

/// Adjective-qualified feature mentions and whether each matches the
/// record's tercile or the feature's risk prior. Score 1 with no mentions.
FdcResult fdc(std::string_view think, const Record& record, const VariableDictionary& dictionary,
              const std::map<std::string, Terciles>& terciles);

/// Share of the nearest class-`pred` prototype's top-K contributors that the
/// rationale mentions. Absent when the library has no such prototype.
std::optional<double> pas(std::string_view think, PdeCategory pred, const kb::FreeShotLibrary& library,
                          const Record& record, const VariableDictionary& dictionary, std::size_t k = 3,
                          double epsilon = kb::kDefaultEpsilon);

struct TradeoffCheck {
  bool risk_cue = false;
  bool protective_cue = false;
  bool connective = false;
  bool passes() const { return risk_cue && protective_cue && connective; }
};

TradeoffCheck boundary_tradeoff(std::string_view think, const VariableDictionary& dictionary,
                                const downgrade::CueLexicon& lexicon = downgrade::CueLexicon::standard());

/// Indices of the samples whose boundary distance lies in the lowest
/// `quantile` (ceil(quantile * n) samples, ties by index).
std::vector<std::size_t> boundary_subset(const std::vector<double>& boundary_distance, double quantile);

/// Mean tradeoff pass rate over the boundary subset; absent when empty.
std::optional<double> bts(const std::vector<double>& boundary_distance, const std::vector<bool>& passes,
                          double quantile = 0.1);

/// severity / cost; throws std::invalid_argument for cost <= 0.
double efficiency(double severity_score, double cost_idx);

struct ReasoningMetrics {
  std::optional<double> lra;
  std::optional<double> sfc;
  std::optional<double> fdc;
  std::optional<double> pas;
  std::optional<double> bts;
  std::size_t boundary_subset_size = 0;
};

nlohmann::ordered_json prediction_metrics_to_json(const PredictionMetrics& m);
nlohmann::ordered_json reasoning_metrics_to_json(const ReasoningMetrics& m);

/// Fixed-width table rows; absent values print as "-".
std::string format_table(const std::vector<std::string>& header, const std::vector<std::vector<std::string>>& rows);
std::string format_metric(const std::optional<double>& v, int decimals = 4);

enum class AblationConfig { kI, kII, kIII, kIV };
std::string_view ablation_name(AblationConfig c);
AblationConfig ablation_from_name(std::string_view s);
inline constexpr std::array<AblationConfig, 4> kAllAblations = {AblationConfig::kI, AblationConfig::kII,
                                                                AblationConfig::kIII, AblationConfig::kIV};
bool uses_neighbors(AblationConfig c);
bool uses_free_shots(AblationConfig c);
bool uses_post_check(AblationConfig c);

}  // namespace floodrag::eval
