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

#include "floodrag/knowledge_base.hpp"

#include <algorithm>
#include <cmath>
#include <future>
#include <limits>
#include <sstream>

#include "floodrag/text_util.hpp"

namespace floodrag::kb {

using nlohmann::json;
using nlohmann::ordered_json;

KbEntry make_entry(Record record, std::string text_mode, prompt::Trajectory trajectory) {
  if (!record.label) throw Error("row " + std::to_string(record.row_id) + ": knowledge-base entries need a label");
  auto audit = prompt::audit_kb_trajectory(trajectory, *record.label);
  if (!audit.clean()) {
    throw Error("row " + std::to_string(record.row_id) + ": trajectory audit failed: " +
                prompt::describe(audit.violations));
  }
  return KbEntry{std::move(record), std::move(text_mode), std::move(trajectory), std::move(audit)};
}

ordered_json entry_to_json(const KbEntry& e, const VariableDictionary& dictionary) {
  ordered_json j;
  j["row_id"] = e.record.row_id;
  j["huc12"] = e.record.huc12;
  j["PDE_category"] = to_int(e.label());
  j["text_mode"] = e.text_mode;
  j["r1"] = e.trajectory.raw.empty() ? prompt::render_trajectory(e.trajectory.think, e.trajectory.answer)
                                     : e.trajectory.raw;
  j["audit"] = {{"despite_count", e.audit.despite_count},
                {"closing_phrase", e.audit.has_closing_phrase},
                {"occurrence_phrase", e.audit.has_occurrence_phrase},
                {"severity_phrase", e.audit.has_severity_phrase}};
  j["record"] = record_to_json(e.record, dictionary);
  return j;
}

KbEntry entry_from_json(const json& j, const VariableDictionary& dictionary) {
  auto loaded = parse_jsonl_dataset(j.at("record").dump(), dictionary);
  if (loaded.records.size() != 1) throw Error("knowledge-base line without a usable record");
  auto parsed = prompt::parse_trajectory(j.at("r1").get<std::string>());
  if (!parsed.ok()) throw Error("knowledge-base trajectory invalid: " + prompt::describe(parsed.violations));
  return make_entry(std::move(loaded.records.front()), j.at("text_mode").get<std::string>(), std::move(*parsed.value));
}

std::vector<KbEntry> load_kb(const std::filesystem::path& path, const VariableDictionary& dictionary) {
  std::vector<KbEntry> out;
  std::istringstream in(read_file(path));
  std::string line;
  std::size_t n = 0;
  while (std::getline(in, line)) {
    ++n;
    if (text::trim(line).empty()) continue;
    try {
      out.push_back(entry_from_json(json::parse(line), dictionary));
    } catch (const json::exception& e) {
      throw Error(path.string() + ":" + std::to_string(n) + ": " + e.what());
    }
  }
  return out;
}

void write_kb(const std::filesystem::path& path, const std::vector<KbEntry>& entries,
              const VariableDictionary& dictionary) {
  std::string out;
  for (const auto& e : entries) out += entry_to_json(e, dictionary).dump() + "\n";
  write_file(path, out);
}

namespace {

std::vector<const KbEntry*> by_row_id(std::vector<const KbEntry*> entries) {
  std::sort(entries.begin(), entries.end(),
            [](const KbEntry* a, const KbEntry* b) { return a->record.row_id < b->record.row_id; });
  return entries;
}

}  // namespace

StatsByLevel compute_class_stats(const std::vector<const KbEntry*>& entries, const std::vector<std::string>& features) {
  // Summation order is fixed by row_id so results do not depend on input order.
  const auto sorted = by_row_id(entries);
  StatsByLevel out;
  for (auto level : kAllLevels) {
    ClassStats cs{level, {}};
    for (const auto& key : features) {
      std::vector<double> xs;
      for (const auto* e : sorted) {
        if (e->label() != level) continue;
        if (auto v = e->record.value(key)) xs.push_back(*v);
      }
      if (xs.empty()) continue;
      double sum = 0.0;
      for (double x : xs) sum += x;
      const double mu = sum / static_cast<double>(xs.size());
      double ss = 0.0;
      for (double x : xs) ss += (x - mu) * (x - mu);
      cs.per_feature[key] = {mu, std::sqrt(ss / static_cast<double>(xs.size())), xs.size()};
    }
    const bool any_entry = std::any_of(sorted.begin(), sorted.end(), [&](const KbEntry* e) { return e->label() == level; });
    if (any_entry) out[level] = std::move(cs);
  }
  return out;
}

ZMap standardized_distance(const FeatureMap& x, const ClassStats& stats, double epsilon) {
  if (!(epsilon > 0.0)) throw std::invalid_argument("standardized_distance: epsilon must be positive");
  ZMap z;
  for (const auto& [key, st] : stats.per_feature) {
    auto it = x.find(key);
    if (it == x.end()) continue;
    z[key] = std::abs(it->second - st.mu) / (st.sigma + epsilon);
  }
  if (z.empty()) throw Error("standardized_distance: record shares no feature with the class stats");
  return z;
}

double weighted_zdistance(const ZMap& z, const Weights& cue_weights) {
  double d = 0.0;
  bool any = false;
  for (const auto& [key, zj] : z) {
    auto it = cue_weights.find(key);
    if (it == cue_weights.end()) continue;
    d += it->second * zj;
    any = true;
  }
  if (!any) throw Error("weighted_zdistance: no weighted feature present");
  return d;
}

namespace {

std::optional<double> try_distance(const FeatureMap& x, const StatsByLevel& stats, PdeCategory level,
                                   const Weights& w, double eps) {
  auto it = stats.find(level);
  if (it == stats.end()) return std::nullopt;
  try {
    return weighted_zdistance(standardized_distance(x, it->second, eps), w);
  } catch (const Error&) {
    return std::nullopt;
  }
}

}  // namespace

Margins boundary_margins(const FeatureMap& x, const StatsByLevel& stats, const Weights& cue_weights, double epsilon) {
  Margins m;
  for (auto level : kAllLevels) {
    auto it = stats.find(level);
    if (it == stats.end()) throw Error("boundary_margins: no stats for level " + std::to_string(to_int(level)));
    m.d[static_cast<std::size_t>(to_int(level))] =
        weighted_zdistance(standardized_distance(x, it->second, epsilon), cue_weights);
  }
  m.m_occ = std::abs(m.d[0] - std::min(m.d[1], m.d[2]));
  m.m_sev = std::abs(m.d[1] - m.d[2]);
  return m;
}

std::string_view shot_kind_name(ShotKind k) {
  switch (k) {
    case ShotKind::kPrototype: return "prototype";
    case ShotKind::kHardOccurrence: return "hard_occurrence";
    case ShotKind::kHardSeverity: return "hard_severity";
  }
  return "?";
}

ShotKind shot_kind_from_name(std::string_view s) {
  if (s == "prototype") return ShotKind::kPrototype;
  if (s == "hard_occurrence") return ShotKind::kHardOccurrence;
  if (s == "hard_severity") return ShotKind::kHardSeverity;
  throw Error("unknown free-shot kind: " + std::string(s));
}

std::vector<std::pair<std::string, double>> top_contributors(const FreeShot& shot, std::size_t k) {
  std::vector<std::pair<std::string, double>> v(shot.per_feature_contrib.begin(), shot.per_feature_contrib.end());
  std::sort(v.begin(), v.end(), [](const auto& a, const auto& b) {
    if (a.second != b.second) return a.second > b.second;
    return a.first < b.first;
  });
  if (v.size() > k) v.resize(k);
  return v;
}

namespace {

std::string contributors_text(const FreeShot& shot) {
  std::vector<std::string> parts;
  for (const auto& [key, c] : top_contributors(shot)) {
    parts.push_back(key + ": " + text::fixed(c, 3) + " (z=" + text::fixed(shot.per_feature_z.at(key), 3) + ")");
  }
  return "Top contributors: " + text::join(parts, ", ") + ".";
}

FreeShot base_shot(const KbEntry& e, ShotKind kind, const StatsByLevel& stats, const Weights& w, double eps) {
  FreeShot s;
  s.kind = kind;
  s.level = e.label();
  s.row_id = e.record.row_id;
  s.features = e.record.predictors;
  s.text_mode = e.text_mode;
  s.reasoning = e.trajectory.raw.empty() ? prompt::render_trajectory(e.trajectory.think, e.trajectory.answer)
                                         : e.trajectory.raw;
  if (auto it = stats.find(e.label()); it != stats.end()) {
    try {
      for (const auto& [key, z] : standardized_distance(e.record.predictors, it->second, eps)) {
        auto wi = w.find(key);
        if (wi == w.end()) continue;
        s.per_feature_z[key] = z;
        s.per_feature_contrib[key] = wi->second * z;
      }
    } catch (const Error&) {
    }
  }
  return s;
}

struct Scored {
  double value;
  const KbEntry* entry;
};

bool scored_less(const Scored& a, const Scored& b) {
  if (a.value != b.value) return a.value < b.value;
  return a.entry->record.row_id < b.entry->record.row_id;
}

}  // namespace

std::map<PdeCategory, std::vector<FreeShot>> select_prototypes(const std::vector<const KbEntry*>& entries,
                                                               const StatsByLevel& stats,
                                                               const Weights& cue_weights, double epsilon) {
  std::map<PdeCategory, std::vector<FreeShot>> out;
  for (auto level : kAllLevels) {
    std::vector<Scored> cands;
    for (const auto* e : entries) {
      if (e->label() != level) continue;
      if (auto d = try_distance(e->record.predictors, stats, level, cue_weights, epsilon)) cands.push_back({*d, e});
    }
    if (cands.empty()) continue;
    std::sort(cands.begin(), cands.end(), scored_less);
    for (std::size_t i = 0; i < std::min<std::size_t>(2, cands.size()); ++i) {
      auto s = base_shot(*cands[i].entry, ShotKind::kPrototype, stats, cue_weights, epsilon);
      s.weighted_zdist = cands[i].value;
      s.why_selected = "Selected as class " + std::to_string(to_int(level)) +
                       " prototype by minimal weighted z-distance; d=" + text::fixed(cands[i].value, 4) + ". " +
                       contributors_text(s);
      out[level].push_back(std::move(s));
    }
  }
  return out;
}

HardExamples select_hard_examples(const std::vector<const KbEntry*>& entries, const StatsByLevel& stats,
                                  const Weights& cue_weights, double epsilon) {
  struct Cand {
    Scored s;
    double left;
    double right;
  };
  std::vector<Cand> occ0, occ1, sev1, sev2;
  for (const auto* e : entries) {
    const auto& x = e->record.predictors;
    const auto d0 = try_distance(x, stats, PdeCategory::kLow, cue_weights, epsilon);
    const auto d1 = try_distance(x, stats, PdeCategory::kMedium, cue_weights, epsilon);
    const auto d2 = try_distance(x, stats, PdeCategory::kHigh, cue_weights, epsilon);
    if (d0 && (d1 || d2)) {
      const double d12 = (d1 && d2) ? std::min(*d1, *d2) : (d1 ? *d1 : *d2);
      Cand c{{std::abs(*d0 - d12), e}, *d0, d12};
      (e->label() == PdeCategory::kLow ? occ0 : occ1).push_back(c);
    }
    if (d1 && d2 && e->label() != PdeCategory::kLow) {
      Cand c{{std::abs(*d1 - *d2), e}, *d1, *d2};
      (e->label() == PdeCategory::kMedium ? sev1 : sev2).push_back(c);
    }
  }

  auto pick = [&](std::vector<Cand>& cands, ShotKind kind) -> std::optional<FreeShot> {
    if (cands.empty()) return std::nullopt;
    const auto best = *std::min_element(cands.begin(), cands.end(),
                                        [](const Cand& a, const Cand& b) { return scored_less(a.s, b.s); });
    auto s = base_shot(*best.s.entry, kind, stats, cue_weights, epsilon);
    s.margin = best.s.value;
    s.d_left = best.left;
    s.d_right = best.right;
    if (kind == ShotKind::kHardOccurrence) {
      s.why_selected = "Closest to 0/1 occurrence boundary (margin=" + text::fixed(best.s.value, 4) +
                       "; d0=" + text::fixed(best.left, 4) + ", d12=" + text::fixed(best.right, 4) + ").";
    } else {
      s.why_selected = "Closest to 1/2 severity boundary (margin=" + text::fixed(best.s.value, 4) +
                       "; d1=" + text::fixed(best.left, 4) + ", d2=" + text::fixed(best.right, 4) + ").";
    }
    if (!s.per_feature_contrib.empty()) s.why_selected += " " + contributors_text(s);
    return s;
  };

  HardExamples h;
  h.occurrence_for_0 = pick(occ0, ShotKind::kHardOccurrence);
  h.occurrence_for_1 = pick(occ1, ShotKind::kHardOccurrence);
  h.severity_for_1 = pick(sev1, ShotKind::kHardSeverity);
  h.severity_for_2 = pick(sev2, ShotKind::kHardSeverity);
  return h;
}

std::vector<std::string> FreeShotLibrary::absent() const {
  std::vector<std::string> out;
  for (auto level : kAllLevels) {
    auto it = prototypes.find(level);
    const std::size_t have = it == prototypes.end() ? 0 : it->second.size();
    if (have < 2) out.push_back("prototypes." + std::to_string(to_int(level)));
  }
  if (!hard.occurrence_for_0) out.emplace_back("occurrence_boundary.for_0");
  if (!hard.occurrence_for_1) out.emplace_back("occurrence_boundary.for_1");
  if (!hard.severity_for_1) out.emplace_back("severity_boundary.for_1");
  if (!hard.severity_for_2) out.emplace_back("severity_boundary.for_2");
  return out;
}

FreeShotLibrary build_library(const std::string& scope, const std::vector<const KbEntry*>& entries,
                              const Weights& cue_weights, double epsilon) {
  if (entries.empty()) throw std::invalid_argument("build_library: empty scope " + scope);
  std::vector<std::string> features;
  for (const auto& [key, w] : cue_weights) features.push_back(key);
  FreeShotLibrary lib;
  lib.scope = scope;
  lib.n_entries = entries.size();
  lib.cue_weights = cue_weights;
  lib.stats = compute_class_stats(entries, features);
  lib.prototypes = select_prototypes(entries, lib.stats, cue_weights, epsilon);
  lib.hard = select_hard_examples(entries, lib.stats, cue_weights, epsilon);
  return lib;
}

std::map<std::string, FreeShotLibrary> build_libraries(const std::vector<KbEntry>& entries,
                                                       const divergence::DivergenceProfile& profile,
                                                       const LibraryConfig& config) {
  if (entries.empty()) throw std::invalid_argument("build_libraries: empty knowledge base");
  std::map<std::string, std::vector<const KbEntry*>> scopes;
  std::vector<const KbEntry*> all;
  for (const auto& e : entries) {
    scopes[e.record.huc12].push_back(&e);
    all.push_back(&e);
  }
  std::vector<std::pair<std::string, std::future<FreeShotLibrary>>> jobs;
  jobs.emplace_back(std::string(kGlobalScope), std::async(std::launch::async, [&] {
                      return build_library(std::string(kGlobalScope), all, profile.cue_weights, config.epsilon);
                    }));
  for (const auto& [huc, members] : scopes) {
    if (members.size() < config.min_scope) continue;
    jobs.emplace_back(huc, std::async(std::launch::async, [&, h = huc] {
                        return build_library(h, scopes.at(h), profile.cue_weights, config.epsilon);
                      }));
  }
  std::map<std::string, FreeShotLibrary> out;
  for (auto& [scope, job] : jobs) out.emplace(scope, job.get());
  return out;
}

// ---------------------------------------------------------------------------
// Serialization

namespace {

ordered_json map_json(const std::map<std::string, double>& m) {
  ordered_json j = ordered_json::object();
  for (const auto& [k, v] : m) j[k] = v;
  return j;
}

std::map<std::string, double> map_from(const json& j) {
  std::map<std::string, double> m;
  for (auto it = j.begin(); it != j.end(); ++it) m[it.key()] = it.value().get<double>();
  return m;
}

ordered_json shot_json(const FreeShot& s) {
  ordered_json j;
  j["row_id"] = s.row_id;
  j["kind"] = shot_kind_name(s.kind);
  j["PDE_category"] = to_int(s.level);
  j["features"] = map_json(s.features);
  if (s.weighted_zdist) j["weighted_zdist"] = *s.weighted_zdist;
  if (s.margin) {
    j["margin"] = *s.margin;
    const bool occ = s.kind == ShotKind::kHardOccurrence;
    j[occ ? "d0" : "d1"] = *s.d_left;
    j[occ ? "d12" : "d2"] = *s.d_right;
  }
  j["per_feature"] = map_json(s.per_feature_contrib);
  j["per_feature_z"] = map_json(s.per_feature_z);
  j["why_selected"] = s.why_selected;
  j["text_mode"] = s.text_mode;
  j["reasoning"] = s.reasoning;
  return j;
}

FreeShot shot_from(const json& j) {
  FreeShot s;
  s.row_id = j.at("row_id").get<std::int64_t>();
  s.kind = shot_kind_from_name(j.at("kind").get<std::string>());
  s.level = category_from_int(j.at("PDE_category").get<int>());
  s.features = map_from(j.at("features"));
  if (j.contains("weighted_zdist")) s.weighted_zdist = j.at("weighted_zdist").get<double>();
  if (j.contains("margin")) {
    s.margin = j.at("margin").get<double>();
    const bool occ = s.kind == ShotKind::kHardOccurrence;
    s.d_left = j.at(occ ? "d0" : "d1").get<double>();
    s.d_right = j.at(occ ? "d12" : "d2").get<double>();
  }
  s.per_feature_contrib = map_from(j.at("per_feature"));
  s.per_feature_z = map_from(j.at("per_feature_z"));
  s.why_selected = j.at("why_selected").get<std::string>();
  s.text_mode = j.at("text_mode").get<std::string>();
  s.reasoning = j.at("reasoning").get<std::string>();
  return s;
}

ordered_json optional_shot(const std::optional<FreeShot>& s) { return s ? shot_json(*s) : ordered_json(nullptr); }

std::optional<FreeShot> optional_from(const json& j, const char* key) {
  if (!j.contains(key) || j.at(key).is_null()) return std::nullopt;
  return shot_from(j.at(key));
}

}  // namespace

ordered_json library_to_json(const FreeShotLibrary& lib) {
  ordered_json j;
  j["scope"] = lib.scope;
  j["n_entries"] = lib.n_entries;
  j["cue_weights"] = map_json(lib.cue_weights);
  ordered_json stats = ordered_json::object();
  for (const auto& [level, cs] : lib.stats) {
    ordered_json per = ordered_json::object();
    for (const auto& [key, st] : cs.per_feature) per[key] = {{"mu", st.mu}, {"sigma", st.sigma}, {"n", st.n}};
    stats[std::to_string(to_int(level))] = std::move(per);
  }
  j["class_stats"] = std::move(stats);
  ordered_json protos = ordered_json::object();
  for (const auto& [level, shots] : lib.prototypes) {
    ordered_json arr = ordered_json::array();
    for (const auto& s : shots) arr.push_back(shot_json(s));
    protos[std::to_string(to_int(level))] = std::move(arr);
  }
  j["prototypes"] = std::move(protos);
  j["hard_examples"] = {
      {"occurrence_boundary",
       {{"for_0", optional_shot(lib.hard.occurrence_for_0)}, {"for_1", optional_shot(lib.hard.occurrence_for_1)}}},
      {"severity_boundary",
       {{"for_1", optional_shot(lib.hard.severity_for_1)}, {"for_2", optional_shot(lib.hard.severity_for_2)}}},
  };
  j["absent"] = lib.absent();
  return j;
}

FreeShotLibrary library_from_json(const json& j) {
  FreeShotLibrary lib;
  lib.scope = j.at("scope").get<std::string>();
  lib.n_entries = j.at("n_entries").get<std::size_t>();
  lib.cue_weights = map_from(j.at("cue_weights"));
  for (auto it = j.at("class_stats").begin(); it != j.at("class_stats").end(); ++it) {
    const auto level = category_from_int(std::stoi(it.key()));
    ClassStats cs{level, {}};
    for (auto f = it.value().begin(); f != it.value().end(); ++f) {
      cs.per_feature[f.key()] = {f.value().at("mu").get<double>(), f.value().at("sigma").get<double>(),
                                 f.value().at("n").get<std::size_t>()};
    }
    lib.stats[level] = std::move(cs);
  }
  for (auto it = j.at("prototypes").begin(); it != j.at("prototypes").end(); ++it) {
    auto& shots = lib.prototypes[category_from_int(std::stoi(it.key()))];
    for (const auto& s : it.value()) shots.push_back(shot_from(s));
  }
  const auto& hard = j.at("hard_examples");
  lib.hard.occurrence_for_0 = optional_from(hard.at("occurrence_boundary"), "for_0");
  lib.hard.occurrence_for_1 = optional_from(hard.at("occurrence_boundary"), "for_1");
  lib.hard.severity_for_1 = optional_from(hard.at("severity_boundary"), "for_1");
  lib.hard.severity_for_2 = optional_from(hard.at("severity_boundary"), "for_2");
  return lib;
}

}  // namespace floodrag::kb
