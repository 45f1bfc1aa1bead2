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

// Per-feature distributional separation between damage levels.
//
// Two boundaries are scored: occurrence (Low vs Medium+High) and severity
// (Medium vs High). Each feature gets a Kolmogorov-Smirnov statistic, a
// histogram Jensen-Shannon divergence and their weighted sum. The sorted
// scores give the feature order used for text modes, the salient set used by
// the reasoning metrics, and the cue weights used for free-shot selection.

#pragma once

#include <map>
#include <set>
#include <span>
#include <string>
#include <vector>

#include "floodrag/core_model.hpp"
#include "json.hpp"

namespace floodrag::divergence {

enum class Boundary { kOccurrence, kSeverity };

std::string_view boundary_name(Boundary b);

struct BoundarySpec {
  Boundary name;
  std::set<PdeCategory> group_a;
  std::set<PdeCategory> group_b;

  static BoundarySpec occurrence();
  static BoundarySpec severity();
};

/// sup |F_a - F_b| over the two empirical CDFs. Throws on an empty sample.
double ks_statistic(std::span<const double> samples_a, std::span<const double> samples_b);

/// JS divergence of two probability vectors of equal length; 0 log 0 = 0.
double js_from_distributions(std::span<const double> p, std::span<const double> q, double log_base = 2.0);

/// Histograms both samples on their pooled min-max range with `bins`
/// equal-width bins and returns the JS divergence of the normalized counts.
/// Identical constant samples give 0.
double js_divergence(std::span<const double> samples_a, std::span<const double> samples_b, int bins,
                     double log_base = 2.0);

/// w_js * js + w_ks * ks. Weights must lie in (0, 1].
double composite_score(double js, double ks, double w_js, double w_ks);

struct DivergenceConfig {
  double w_js = 0.7;
  double w_ks = 0.3;
  int bins = 64;
  double log_base = 2.0;
  /// Top-k per boundary entering the salient set.
  int salient_k = 5;
};

struct FeatureDivergence {
  std::string feature;
  double js = 0.0;
  double ks = 0.0;
  double score = 0.0;
  std::size_t n_a = 0;
  std::size_t n_b = 0;
  /// True when a group had no usable values; the feature then scores 0.
  bool insufficient = false;
};

struct DivergenceProfile {
  double w_js = 0.7;
  double w_ks = 0.3;
  std::map<Boundary, std::vector<FeatureDivergence>> per_boundary;
  std::map<Boundary, std::vector<std::string>> ordered_features;
  std::set<std::string> salient_set;
  std::map<std::string, double> cue_weights;

  const FeatureDivergence* find(Boundary b, const std::string& feature) const;
};

/// Scores `features` at both boundaries over the labeled records.
DivergenceProfile build_profile(const std::vector<Record>& records, const std::vector<std::string>& features,
                                const DivergenceConfig& config = {});

nlohmann::ordered_json profile_to_json(const DivergenceProfile& profile);
DivergenceProfile profile_from_json(const nlohmann::json& j);

/// Aligned text table: one row per feature, Score/JS/KS at both boundaries,
/// rows in occurrence order.
std::string profile_report(const DivergenceProfile& profile, const VariableDictionary& dictionary);

}  // namespace floodrag::divergence
