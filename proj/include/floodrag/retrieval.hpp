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

// Spatial neighbor search over the knowledge base and the free-shot
// injection policy that depends on how many neighbors were found.

#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <unordered_map>
#include <vector>

#include "floodrag/knowledge_base.hpp"
#include "json.hpp"

namespace floodrag::retrieval {

inline constexpr double kEarthRadiusKm = 6371.0088;

/// Great-circle distance between (lon, lat) pairs in degrees.
double haversine_km(double lon_a, double lat_a, double lon_b, double lat_b);

struct GeoPoint {
  std::int64_t id = 0;
  double lon = 0.0;
  double lat = 0.0;
};

struct GeoHit {
  std::size_t index = 0;  // position in the indexed point list
  std::int64_t id = 0;
  double distance_km = 0.0;
};

/// Uniform lon/lat grid. Cells are `cell_km` on a side at the mean latitude
/// of the indexed points; queries visit every cell intersecting the
/// spherical cap's bounding box, so results are exact.
class GridIndex {
 public:
  explicit GridIndex(std::vector<GeoPoint> points, double cell_km = 1.0);

  /// Up to k nearest points within radius_km, sorted by (distance, id).
  std::vector<GeoHit> query(double lon, double lat, double radius_km, std::size_t k,
                            std::optional<std::int64_t> exclude_id = std::nullopt) const;

  const std::vector<GeoPoint>& points() const { return points_; }

 private:
  struct CellHash {
    std::size_t operator()(const std::pair<long long, long long>& c) const noexcept {
      return std::hash<long long>()(c.first * 1000003LL ^ c.second);
    }
  };
  std::pair<long long, long long> cell_of(double lon, double lat) const;

  std::vector<GeoPoint> points_;
  double cell_deg_lat_ = 0.0;
  double cell_deg_lon_ = 0.0;
  std::unordered_map<std::pair<long long, long long>, std::vector<std::size_t>, CellHash> cells_;
};

struct NeighborContext {
  const kb::KbEntry* entry = nullptr;
  double distance_km = 0.0;
  int rank = 1;
  bool within_1km = true;
};

/// Knowledge base with a spatial index over its coordinates. Holds a
/// reference; the entries must outlive it.
class KbIndex {
 public:
  explicit KbIndex(const std::vector<kb::KbEntry>& entries, double cell_km = 1.0);

  const std::vector<kb::KbEntry>& entries() const { return entries_; }
  const GridIndex& grid() const { return grid_; }

 private:
  const std::vector<kb::KbEntry>& entries_;
  GridIndex grid_;
};

/// Up to k_max labeled entries within radius_km of the target, nearest
/// first, ranked from 1; the target's own row_id is skipped.
std::vector<NeighborContext> find_neighbors(const Record& target, const KbIndex& kb, std::size_t k_max = 3,
                                            double radius_km = 1.0);

enum class HardSlot { kOccurrenceFor0, kOccurrenceFor1, kSeverityFor1, kSeverityFor2 };
std::string_view hard_slot_name(HardSlot s);

struct InjectionPlan {
  int neighbor_count = 0;
  int prototypes_per_level = 0;
  std::vector<HardSlot> hard_examples;

  bool operator==(const InjectionPlan&) const = default;
};

/// The policy as a function of neighbor count and the nearest neighbor's
/// label. Throws std::invalid_argument for counts outside 0..3, or a
/// missing label when the count is positive.
InjectionPlan plan_injection(int neighbor_count, std::optional<PdeCategory> nearest_label);
InjectionPlan plan_injection(const std::vector<NeighborContext>& neighbors);

struct ResolvedShot {
  const kb::FreeShot* shot = nullptr;
  std::string scope;
  std::string slot;  // e.g. "prototype.1", "occurrence_boundary.for_0"
};

struct Resolution {
  std::vector<ResolvedShot> shots;
  /// Slots neither library could fill without repeating a row.
  std::vector<std::string> unfilled;
};

/// Slot-wise: the target's HUC12 library when it has the slot, else global.
/// Prototypes by level ascending, then hard examples in plan order.
Resolution resolve_free_shots(const InjectionPlan& plan, const std::string& target_huc12,
                              const std::map<std::string, kb::FreeShotLibrary>& libraries);

/// One retrieval audit line.
nlohmann::ordered_json retrieval_audit(std::int64_t row_id, const std::vector<NeighborContext>& neighbors,
                                       const InjectionPlan& plan, const Resolution& resolution);

}  // namespace floodrag::retrieval
