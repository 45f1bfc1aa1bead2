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

// Cue-lexicon post-check that lowers a predicted label by one level when
// the rationale describes weaker damage than the label claims.

#pragma once

#include <string>
#include <string_view>
#include <vector>

#include "floodrag/core_model.hpp"
#include "json.hpp"

namespace floodrag::retrieval {
struct NeighborContext;
}

namespace floodrag::downgrade {

struct CueLexicon {
  std::vector<std::string> severity;
  std::vector<std::string> light;
  std::vector<std::string> uncertain;

  /// 12 severity, 11 light and 5 uncertain phrases.
  static CueLexicon standard();
};

/// Distinct phrases found, in lexicon order.
struct CueHits {
  std::vector<std::string> severity;
  std::vector<std::string> light;
  std::vector<std::string> uncertain;

  bool operator==(const CueHits&) const = default;
};

/// Case-insensitive substring scan. Light and uncertain occurrences lying
/// inside or across a severity occurrence are discarded ("impassable" is not
/// a "passable" hit).
CueHits scan_cues(std::string_view text, const CueLexicon& lexicon);

struct Thresholds {
  std::size_t light_min = 2;
  std::size_t severity_max = 0;
  std::size_t weak_evidence_max = 1;
};

enum class FiredRule { kNone, kTwoToOne, kOneToZero };
enum class NeighborSignal { kUnused, kConfirming, kNonConfirming };
std::string_view fired_rule_name(FiredRule r);
std::string_view neighbor_signal_name(NeighborSignal s);

struct NeighborEvidence {
  PdeCategory label = PdeCategory::kLow;
  std::string reasoning;
};

std::vector<NeighborEvidence> evidence_of(const std::vector<retrieval::NeighborContext>& neighbors);

struct DowngradeDecision {
  PdeCategory input_label = PdeCategory::kLow;
  PdeCategory output_label = PdeCategory::kLow;
  FiredRule fired_rule = FiredRule::kNone;
  CueHits matched;
  /// An uncertain cue shares a sentence with the level being questioned.
  bool uncertain_about_level = false;
  NeighborSignal neighbor_signal = NeighborSignal::kUnused;

  bool operator==(const DowngradeDecision&) const = default;
};

/// Applies at most one rule. Neighbors are reported as a confirming or
/// non-confirming signal but never decide the outcome.
DowngradeDecision apply_downgrade(PdeCategory pred, std::string_view think,
                                  const std::vector<NeighborEvidence>& neighbors,
                                  const CueLexicon& lexicon = CueLexicon::standard(), const Thresholds& thresholds = {});

/// Rule text embedded in prediction prompts, with the cue lists appended.
std::string render_downgrade_rule(const CueLexicon& lexicon = CueLexicon::standard());

nlohmann::ordered_json decision_to_json(const DowngradeDecision& d);

}  // namespace floodrag::downgrade
