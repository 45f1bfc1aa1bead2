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

#include "floodrag/downgrade.hpp"

#include <algorithm>

#include "floodrag/knowledge_base.hpp"
#include "floodrag/retrieval.hpp"
#include "floodrag/text_util.hpp"

namespace floodrag::downgrade {

CueLexicon CueLexicon::standard() {
  return CueLexicon{
      {"deep inundation", "indoor damage", "water entered building", "long-lasting flooding", "prolonged",
       "severe structural", "impassable", "major damage", "over-topping", "overtopping", "high water depth",
       "significant damage"},
      {"minor", "shallow", "surface-level", "brief", "quickly receded", "passable", "no indoor", "limited",
       "localized", "light impact", "nuisance flooding"},
      {"uncertain", "insufficient", "not enough evidence", "ambiguous", "unsure"},
  };
}

namespace {

/// Lowercased text with every severity occurrence blanked out.
struct Scanned {
  CueHits hits;
  std::string masked;
};

bool occurs(std::string_view hay, std::string_view needle) {
  return !needle.empty() && hay.find(needle) != std::string_view::npos;
}

Scanned scan(std::string_view text, const CueLexicon& lexicon) {
  Scanned out;
  const std::string lowered = text::to_lower(text);
  out.masked = lowered;
  for (const auto& phrase : lexicon.severity) {
    const auto p = text::to_lower(phrase);
    if (p.empty()) continue;
    bool hit = false;
    for (auto pos = lowered.find(p); pos != std::string::npos; pos = lowered.find(p, pos + 1)) {
      hit = true;
      std::fill(out.masked.begin() + static_cast<std::ptrdiff_t>(pos),
                out.masked.begin() + static_cast<std::ptrdiff_t>(pos + p.size()), ' ');
    }
    if (hit) out.hits.severity.push_back(phrase);
  }
  for (const auto& phrase : lexicon.light) {
    if (occurs(out.masked, text::to_lower(phrase))) out.hits.light.push_back(phrase);
  }
  for (const auto& phrase : lexicon.uncertain) {
    if (occurs(out.masked, text::to_lower(phrase))) out.hits.uncertain.push_back(phrase);
  }
  return out;
}

/// An uncertain cue and one of `topics` in the same sentence of the masked text.
bool uncertain_about(const std::string& masked, const CueLexicon& lexicon, std::initializer_list<std::string_view> topics) {
  for (const auto& sentence : text::split_sentences(masked)) {
    const bool uncertain = std::any_of(lexicon.uncertain.begin(), lexicon.uncertain.end(),
                                       [&](const std::string& u) { return occurs(sentence, text::to_lower(u)); });
    if (!uncertain) continue;
    for (auto t : topics) {
      if (!text::find_words(sentence, t).empty()) return true;
    }
  }
  return false;
}

bool light_dominated(const std::string& reasoning, const CueLexicon& lexicon) {
  const auto h = scan(reasoning, lexicon).hits;
  return h.light.size() > h.severity.size();
}

}  // namespace

CueHits scan_cues(std::string_view text, const CueLexicon& lexicon) { return scan(text, lexicon).hits; }

std::string_view fired_rule_name(FiredRule r) {
  switch (r) {
    case FiredRule::kNone: return "none";
    case FiredRule::kTwoToOne: return "rule_2_to_1";
    case FiredRule::kOneToZero: return "rule_1_to_0";
  }
  return "?";
}

std::string_view neighbor_signal_name(NeighborSignal s) {
  switch (s) {
    case NeighborSignal::kUnused: return "unused";
    case NeighborSignal::kConfirming: return "confirming";
    case NeighborSignal::kNonConfirming: return "non_confirming";
  }
  return "?";
}

std::vector<NeighborEvidence> evidence_of(const std::vector<retrieval::NeighborContext>& neighbors) {
  std::vector<NeighborEvidence> out;
  out.reserve(neighbors.size());
  for (const auto& n : neighbors) out.push_back({n.entry->label(), n.entry->trajectory.think});
  return out;
}

DowngradeDecision apply_downgrade(PdeCategory pred, std::string_view think,
                                  const std::vector<NeighborEvidence>& neighbors, const CueLexicon& lexicon,
                                  const Thresholds& thresholds) {
  DowngradeDecision d;
  d.input_label = pred;
  d.output_label = pred;
  const auto scanned = scan(think, lexicon);
  d.matched = scanned.hits;
  if (pred == PdeCategory::kLow) return d;

  const auto n_sev = d.matched.severity.size();
  const auto n_light = d.matched.light.size();
  const bool light_contradiction = n_light >= thresholds.light_min && n_sev <= thresholds.severity_max;

  bool fires = false;
  if (pred == PdeCategory::kHigh) {
    d.uncertain_about_level = uncertain_about(scanned.masked, lexicon, {"high", "class 2", "severe"});
    fires = light_contradiction || d.uncertain_about_level;
  } else {
    d.uncertain_about_level = uncertain_about(scanned.masked, lexicon, {"damage"});
    fires = light_contradiction || (d.uncertain_about_level && n_light > n_sev);
  }

  if (n_sev <= thresholds.weak_evidence_max && !neighbors.empty()) {
    std::size_t agree = 0;
    for (const auto& n : neighbors) {
      const bool label_ok = pred == PdeCategory::kHigh ? n.label != PdeCategory::kHigh : n.label == PdeCategory::kLow;
      if (label_ok && light_dominated(n.reasoning, lexicon)) ++agree;
    }
    d.neighbor_signal = 2 * agree > neighbors.size() ? NeighborSignal::kConfirming : NeighborSignal::kNonConfirming;
  }

  if (fires) {
    d.output_label = category_from_int(to_int(pred) - 1);
    d.fired_rule = pred == PdeCategory::kHigh ? FiredRule::kTwoToOne : FiredRule::kOneToZero;
  }
  return d;
}

namespace {

std::string quoted_list(const std::vector<std::string>& items) {
  std::vector<std::string> q;
  for (const auto& s : items) q.push_back("\"" + s + "\"");
  return "[" + text::join(q, ", ") + "]";
}

}  // namespace

std::string render_downgrade_rule(const CueLexicon& lexicon) {
  std::string s =
      "[RULE] Only apply the following rules when your <think> clearly shows uncertainty or a contradiction between "
      "the predicted class and your own description.\n\n"
      "[2->1] High damage to medium. If you output class 2 but in your <think> the text mainly matches {LIGHT_CUES} "
      "and does not strongly match {SEVERITY_CUES}, or you use expressions that match {UNCERTAIN_CUES} about the "
      "evidence for high damage, then you must downgrade the answer from 2 to 1. Neighbors are only a secondary "
      "signal: when the target text_mode contains very few {SEVERITY_CUES} and in this weak-evidence setting the "
      "closest neighbors within one kilometer are mostly class 0 or 1 with reasoning dominated by {LIGHT_CUES}, you "
      "should treat this as confirming the contradiction and keep the downgrade from 2 to 1.\n\n"
      "[1->0] Medium damage to low. If you output class 1 but in your <think> the text mainly matches {LIGHT_CUES} "
      "and clearly does not describe a state supported by {SEVERITY_CUES}, or you say that there is not enough "
      "evidence of damage in a way that matches {UNCERTAIN_CUES} and your description is closer to no damage than "
      "to medium damage, then you must downgrade the answer from 1 to 0. Neighbors are only a secondary signal: when "
      "the target text_mode contains very few {SEVERITY_CUES} and the closest neighbors within one kilometer are "
      "class 0 with reasoning dominated by {LIGHT_CUES}, you should treat this as confirming the contradiction and "
      "keep the downgrade from 1 to 0.\n\n";
  s += "SEVERITY_CUES = " + quoted_list(lexicon.severity) + "\n";
  s += "LIGHT_CUES = " + quoted_list(lexicon.light) + "\n";
  s += "UNCERTAIN_CUES = " + quoted_list(lexicon.uncertain);
  return s;
}

nlohmann::ordered_json decision_to_json(const DowngradeDecision& d) {
  nlohmann::ordered_json j;
  j["raw_label"] = to_int(d.input_label);
  j["final_label"] = to_int(d.output_label);
  j["fired_rule"] = fired_rule_name(d.fired_rule);
  j["matched_cues"] = {{"severity", d.matched.severity}, {"light", d.matched.light}, {"uncertain", d.matched.uncertain}};
  j["uncertain_about_level"] = d.uncertain_about_level;
  j["neighbor_signal"] = neighbor_signal_name(d.neighbor_signal);
  return j;
}

}  // namespace floodrag::downgrade
