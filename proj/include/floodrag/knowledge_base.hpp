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

// Knowledge-base entries and free-shot libraries.
//
// A library holds, per scope (a HUC12 code or "global"), two prototypes per
// damage level and the hard examples nearest to the occurrence and severity
// boundaries. Distances are divergence-weighted z-distances to class means
// computed inside the scope.

#pragma once

#include <array>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "floodrag/core_model.hpp"
#include "floodrag/divergence.hpp"
#include "floodrag/prompt_forge.hpp"
#include "json.hpp"

namespace floodrag::kb {

inline constexpr double kDefaultEpsilon = 1e-6;
inline constexpr std::string_view kGlobalScope = "global";

struct KbEntry {
  Record record;
  std::string text_mode;
  prompt::Trajectory trajectory;
  prompt::TrajectoryAudit audit;

  PdeCategory label() const { return *record.label; }
};

/// Audits the trajectory against the record label. Throws Error when the
/// record is unlabeled or the audit reports any violation.
KbEntry make_entry(Record record, std::string text_mode, prompt::Trajectory trajectory);

nlohmann::ordered_json entry_to_json(const KbEntry& e, const VariableDictionary& dictionary);
KbEntry entry_from_json(const nlohmann::json& j, const VariableDictionary& dictionary);
std::vector<KbEntry> load_kb(const std::filesystem::path& path, const VariableDictionary& dictionary);
void write_kb(const std::filesystem::path& path, const std::vector<KbEntry>& entries,
              const VariableDictionary& dictionary);

struct FeatureStats {
  double mu = 0.0;
  double sigma = 0.0;  // population standard deviation
  std::size_t n = 0;

  bool operator==(const FeatureStats&) const = default;
};

struct ClassStats {
  PdeCategory level = PdeCategory::kLow;
  std::map<std::string, FeatureStats> per_feature;

  bool operator==(const ClassStats&) const = default;
};

using StatsByLevel = std::map<PdeCategory, ClassStats>;
using ZMap = std::map<std::string, double>;
using Weights = std::map<std::string, double>;

/// Per-level stats over `features`; levels with no entries are omitted.
StatsByLevel compute_class_stats(const std::vector<const KbEntry*>& entries, const std::vector<std::string>& features);

/// z_j = |x_j - mu_j| / (sigma_j + epsilon) over features present in both.
/// Throws Error when no feature overlaps.
ZMap standardized_distance(const FeatureMap& x, const ClassStats& stats, double epsilon = kDefaultEpsilon);

/// sum_j w_j z_j over keys of z. Throws Error when no key is weighted.
double weighted_zdistance(const ZMap& z, const Weights& cue_weights);

struct Margins {
  double m_occ = 0.0;
  double m_sev = 0.0;
  std::array<double, 3> d{};  // d per level
};

/// Needs stats for all three levels; throws Error otherwise.
Margins boundary_margins(const FeatureMap& x, const StatsByLevel& stats, const Weights& cue_weights,
                         double epsilon = kDefaultEpsilon);

enum class ShotKind { kPrototype, kHardOccurrence, kHardSeverity };
std::string_view shot_kind_name(ShotKind k);
ShotKind shot_kind_from_name(std::string_view s);

struct FreeShot {
  ShotKind kind = ShotKind::kPrototype;
  PdeCategory level = PdeCategory::kLow;
  std::int64_t row_id = 0;
  FeatureMap features;
  /// Prototypes only.
  std::optional<double> weighted_zdist;
  /// Hard examples only, with the two distances the margin compares.
  std::optional<double> margin;
  std::optional<double> d_left;
  std::optional<double> d_right;
  /// w_j z_j and z_j against the shot's own class stats.
  std::map<std::string, double> per_feature_contrib;
  std::map<std::string, double> per_feature_z;
  std::string why_selected;
  std::string text_mode;
  std::string reasoning;

  bool operator==(const FreeShot&) const = default;
};

/// Top `k` features by contribution, descending, ties by key.
std::vector<std::pair<std::string, double>> top_contributors(const FreeShot& shot, std::size_t k = 3);

/// Up to two prototypes per level present in `entries`; levels with no
/// entries are absent from the result.
std::map<PdeCategory, std::vector<FreeShot>> select_prototypes(const std::vector<const KbEntry*>& entries,
                                                               const StatsByLevel& stats,
                                                               const Weights& cue_weights,
                                                               double epsilon = kDefaultEpsilon);

struct HardExamples {
  std::optional<FreeShot> occurrence_for_0;
  std::optional<FreeShot> occurrence_for_1;
  std::optional<FreeShot> severity_for_1;
  std::optional<FreeShot> severity_for_2;

  bool operator==(const HardExamples&) const = default;
};

/// Occurrence margins compare d(Low) with the smaller of the damage-level
/// distances available in scope; severity margins need both Medium and High.
HardExamples select_hard_examples(const std::vector<const KbEntry*>& entries, const StatsByLevel& stats,
                                  const Weights& cue_weights, double epsilon = kDefaultEpsilon);

struct FreeShotLibrary {
  std::string scope;
  std::size_t n_entries = 0;
  std::map<PdeCategory, std::vector<FreeShot>> prototypes;
  HardExamples hard;
  StatsByLevel stats;
  Weights cue_weights;

  /// Slot names that could not be filled, e.g. "prototypes.2", "severity_boundary.for_1".
  std::vector<std::string> absent() const;
  bool operator==(const FreeShotLibrary&) const = default;
};

struct LibraryConfig {
  std::size_t min_scope = 100;
  double epsilon = kDefaultEpsilon;
};

FreeShotLibrary build_library(const std::string& scope, const std::vector<const KbEntry*>& entries,
                              const Weights& cue_weights, double epsilon = kDefaultEpsilon);

/// One library per HUC12 with at least min_scope entries, plus "global".
std::map<std::string, FreeShotLibrary> build_libraries(const std::vector<KbEntry>& entries,
                                                       const divergence::DivergenceProfile& profile,
                                                       const LibraryConfig& config = {});

nlohmann::ordered_json library_to_json(const FreeShotLibrary& lib);
FreeShotLibrary library_from_json(const nlohmann::json& j);

}  // namespace floodrag::kb
