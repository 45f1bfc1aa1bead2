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

#include "floodrag/retrieval.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <set>
#include <stdexcept>

namespace floodrag::retrieval {

namespace {

constexpr double kDeg = std::numbers::pi / 180.0;
constexpr double kKmPerDegLat = kEarthRadiusKm * kDeg;

}  // namespace

double haversine_km(double lon_a, double lat_a, double lon_b, double lat_b) {
  const double p1 = lat_a * kDeg;
  const double p2 = lat_b * kDeg;
  const double dp = (lat_b - lat_a) * kDeg;
  const double dl = (lon_b - lon_a) * kDeg;
  const double s = std::sin(dp / 2.0);
  const double t = std::sin(dl / 2.0);
  const double h = std::min(1.0, s * s + std::cos(p1) * std::cos(p2) * t * t);
  return 2.0 * kEarthRadiusKm * std::asin(std::sqrt(h));
}

GridIndex::GridIndex(std::vector<GeoPoint> points, double cell_km) : points_(std::move(points)) {
  if (!(cell_km > 0.0)) throw std::invalid_argument("GridIndex: cell size must be positive");
  double mean_lat = 0.0;
  for (const auto& p : points_) mean_lat += p.lat;
  if (!points_.empty()) mean_lat /= static_cast<double>(points_.size());
  cell_deg_lat_ = cell_km / kKmPerDegLat;
  cell_deg_lon_ = cell_deg_lat_ / std::max(0.05, std::cos(mean_lat * kDeg));
  for (std::size_t i = 0; i < points_.size(); ++i) cells_[cell_of(points_[i].lon, points_[i].lat)].push_back(i);
}

std::pair<long long, long long> GridIndex::cell_of(double lon, double lat) const {
  return {static_cast<long long>(std::floor(lon / cell_deg_lon_)),
          static_cast<long long>(std::floor(lat / cell_deg_lat_))};
}

std::vector<GeoHit> GridIndex::query(double lon, double lat, double radius_km, std::size_t k,
                                     std::optional<std::int64_t> exclude_id) const {
  std::vector<GeoHit> hits;
  if (k == 0 || radius_km < 0.0 || points_.empty()) return hits;

  auto consider = [&](std::size_t i) {
    const auto& p = points_[i];
    if (exclude_id && p.id == *exclude_id) return;
    const double d = haversine_km(lon, lat, p.lon, p.lat);
    if (d <= radius_km) hits.push_back({i, p.id, d});
  };

  // Bounding box of the spherical cap: the latitude span is r/R; the
  // longitude half-width is asin(sin(r/R)/cos(lat)).
  const double ang = radius_km / kEarthRadiusKm;
  const double dlat = ang / kDeg * (1.0 + 1e-9);
  const double lat_lo = lat - dlat;
  const double lat_hi = lat + dlat;
  const double ratio = std::sin(ang) / std::cos(lat * kDeg);
  const bool degenerate = lat_lo <= -90.0 || lat_hi >= 90.0 || !(ratio < 1.0) || ang >= std::numbers::pi / 2;
  const double dlon = degenerate ? 360.0 : std::asin(ratio) / kDeg * (1.0 + 1e-9);
  const std::size_t span_cells =
      static_cast<std::size_t>((2 * dlon / cell_deg_lon_ + 2) * (2 * dlat / cell_deg_lat_ + 2));

  if (degenerate || lon - dlon < -180.0 || lon + dlon > 180.0 || span_cells > cells_.size()) {
    for (std::size_t i = 0; i < points_.size(); ++i) consider(i);
  } else {
    const auto lo = cell_of(lon - dlon, lat_lo);
    const auto hi = cell_of(lon + dlon, lat_hi);
    for (long long cx = lo.first; cx <= hi.first; ++cx) {
      for (long long cy = lo.second; cy <= hi.second; ++cy) {
        auto it = cells_.find({cx, cy});
        if (it == cells_.end()) continue;
        for (auto i : it->second) consider(i);
      }
    }
  }
  std::sort(hits.begin(), hits.end(), [](const GeoHit& a, const GeoHit& b) {
    if (a.distance_km != b.distance_km) return a.distance_km < b.distance_km;
    return a.id < b.id;
  });
  if (hits.size() > k) hits.resize(k);
  return hits;
}

namespace {

std::vector<GeoPoint> points_of(const std::vector<kb::KbEntry>& entries) {
  std::vector<GeoPoint> pts;
  pts.reserve(entries.size());
  for (const auto& e : entries) pts.push_back({e.record.row_id, e.record.x, e.record.y});
  return pts;
}

}  // namespace

KbIndex::KbIndex(const std::vector<kb::KbEntry>& entries, double cell_km)
    : entries_(entries), grid_(points_of(entries), cell_km) {}

std::vector<NeighborContext> find_neighbors(const Record& target, const KbIndex& kb, std::size_t k_max,
                                            double radius_km) {
  std::vector<NeighborContext> out;
  int rank = 1;
  for (const auto& h : kb.grid().query(target.x, target.y, radius_km, k_max, target.row_id)) {
    out.push_back({&kb.entries()[h.index], h.distance_km, rank++, true});
  }
  return out;
}

std::string_view hard_slot_name(HardSlot s) {
  switch (s) {
    case HardSlot::kOccurrenceFor0: return "occurrence_boundary.for_0";
    case HardSlot::kOccurrenceFor1: return "occurrence_boundary.for_1";
    case HardSlot::kSeverityFor1: return "severity_boundary.for_1";
    case HardSlot::kSeverityFor2: return "severity_boundary.for_2";
  }
  return "?";
}

InjectionPlan plan_injection(int neighbor_count, std::optional<PdeCategory> nearest_label) {
  if (neighbor_count < 0 || neighbor_count > 3) {
    throw std::invalid_argument("plan_injection: neighbor count must be 0..3, got " + std::to_string(neighbor_count));
  }
  if (neighbor_count > 0 && !nearest_label) throw std::invalid_argument("plan_injection: nearest label required");
  InjectionPlan p;
  p.neighbor_count = neighbor_count;
  switch (neighbor_count) {
    case 3:
      break;
    case 2:
      p.prototypes_per_level = 1;
      switch (*nearest_label) {
        case PdeCategory::kLow: p.hard_examples = {HardSlot::kOccurrenceFor0}; break;
        case PdeCategory::kMedium: p.hard_examples = {HardSlot::kOccurrenceFor1}; break;
        case PdeCategory::kHigh: p.hard_examples = {HardSlot::kSeverityFor2}; break;
      }
      break;
    case 1:
      p.prototypes_per_level = 1;
      if (*nearest_label == PdeCategory::kHigh) {
        p.hard_examples = {HardSlot::kSeverityFor1, HardSlot::kSeverityFor2};
      } else {
        p.hard_examples = {HardSlot::kOccurrenceFor0, HardSlot::kOccurrenceFor1};
      }
      break;
    case 0:
      p.prototypes_per_level = 2;
      p.hard_examples = {HardSlot::kOccurrenceFor0, HardSlot::kSeverityFor2};
      break;
  }
  return p;
}

InjectionPlan plan_injection(const std::vector<NeighborContext>& neighbors) {
  if (neighbors.size() > 3) throw std::invalid_argument("plan_injection: more than three neighbors");
  std::optional<PdeCategory> nearest;
  if (!neighbors.empty()) nearest = neighbors.front().entry->label();
  return plan_injection(static_cast<int>(neighbors.size()), nearest);
}

namespace {

const std::optional<kb::FreeShot>& hard_of(const kb::FreeShotLibrary& lib, HardSlot s) {
  switch (s) {
    case HardSlot::kOccurrenceFor0: return lib.hard.occurrence_for_0;
    case HardSlot::kOccurrenceFor1: return lib.hard.occurrence_for_1;
    case HardSlot::kSeverityFor1: return lib.hard.severity_for_1;
    case HardSlot::kSeverityFor2: return lib.hard.severity_for_2;
  }
  throw std::logic_error("hard_of");
}

}  // namespace

Resolution resolve_free_shots(const InjectionPlan& plan, const std::string& target_huc12,
                              const std::map<std::string, kb::FreeShotLibrary>& libraries) {
  auto g = libraries.find(std::string(kb::kGlobalScope));
  if (g == libraries.end()) throw Error("resolve_free_shots: no global library");
  const kb::FreeShotLibrary* local = nullptr;
  if (auto l = libraries.find(target_huc12); l != libraries.end() && l != g) local = &l->second;
  const kb::FreeShotLibrary& global = g->second;

  Resolution res;
  std::set<std::int64_t> used;
  auto take = [&](const kb::FreeShot* shot, const std::string& scope, const std::string& slot) {
    used.insert(shot->row_id);
    res.shots.push_back({shot, scope, slot});
  };

  for (auto level : kAllLevels) {
    const std::string slot = "prototype." + std::to_string(to_int(level));
    auto protos_of = [&](const kb::FreeShotLibrary* lib) -> const std::vector<kb::FreeShot>* {
      if (lib == nullptr) return nullptr;
      auto it = lib->prototypes.find(level);
      return it == lib->prototypes.end() ? nullptr : &it->second;
    };
    const auto* lp = protos_of(local);
    const auto* gp = protos_of(&global);
    for (int i = 0; i < plan.prototypes_per_level; ++i) {
      const auto idx = static_cast<std::size_t>(i);
      if (lp != nullptr && idx < lp->size() && used.count((*lp)[idx].row_id) == 0) {
        take(&(*lp)[idx], local->scope, slot);
        continue;
      }
      // Global fallback: the first global prototype of this level not yet used.
      const kb::FreeShot* pick = nullptr;
      if (gp != nullptr) {
        for (const auto& s : *gp) {
          if (used.count(s.row_id) == 0) {
            pick = &s;
            break;
          }
        }
      }
      if (pick != nullptr) {
        take(pick, global.scope, slot);
      } else {
        res.unfilled.push_back(slot);
      }
    }
  }
  for (auto hs : plan.hard_examples) {
    const std::string slot(hard_slot_name(hs));
    if (local != nullptr) {
      const auto& s = hard_of(*local, hs);
      if (s && used.count(s->row_id) == 0) {
        take(&*s, local->scope, slot);
        continue;
      }
    }
    const auto& s = hard_of(global, hs);
    if (s && used.count(s->row_id) == 0) {
      take(&*s, global.scope, slot);
    } else {
      res.unfilled.push_back(slot);
    }
  }
  return res;
}

nlohmann::ordered_json retrieval_audit(std::int64_t row_id, const std::vector<NeighborContext>& neighbors,
                                       const InjectionPlan& plan, const Resolution& resolution) {
  nlohmann::ordered_json j;
  j["row_id"] = row_id;
  auto ns = nlohmann::ordered_json::array();
  for (const auto& n : neighbors) {
    ns.push_back({{"row_id", n.entry->record.row_id},
                  {"label", to_int(n.entry->label())},
                  {"distance_km", n.distance_km},
                  {"rank", n.rank}});
  }
  j["neighbors"] = std::move(ns);
  auto hard = nlohmann::ordered_json::array();
  for (auto h : plan.hard_examples) hard.push_back(hard_slot_name(h));
  j["plan"] = {{"neighbor_count", plan.neighbor_count},
               {"prototypes_per_level", plan.prototypes_per_level},
               {"hard_examples", std::move(hard)}};
  auto shots = nlohmann::ordered_json::array();
  for (const auto& s : resolution.shots) {
    shots.push_back({{"row_id", s.shot->row_id}, {"slot", s.slot}, {"scope", s.scope}});
  }
  j["free_shots"] = std::move(shots);
  j["unfilled"] = resolution.unfilled;
  return j;
}

}  // namespace floodrag::retrieval
