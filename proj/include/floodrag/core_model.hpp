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

// Domain types shared by every stage: the variable dictionary, grid-cell
// records, the ordinal damage label, and dataset ingestion.

#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "json.hpp"

namespace floodrag {

/// Raised for malformed inputs and I/O failures anywhere in the pipeline.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Ordinal property-damage-extent level.
enum class PdeCategory : std::uint8_t { kLow = 0, kMedium = 1, kHigh = 2 };

inline constexpr std::array<PdeCategory, 3> kAllLevels = {PdeCategory::kLow, PdeCategory::kMedium,
                                                          PdeCategory::kHigh};

constexpr int to_int(PdeCategory c) { return static_cast<int>(c); }
/// Throws std::invalid_argument outside {0,1,2}.
PdeCategory category_from_int(long long v);
std::string_view category_name(PdeCategory c);

enum class RiskDirection { kHigherIsRiskier, kHigherIsProtective, kNeutral };
std::string_view risk_direction_name(RiskDirection d);
RiskDirection risk_direction_from_name(std::string_view name);

/// A surface form used to detect a feature mention in free text.
struct Alias {
  std::string text;
  bool case_sensitive = false;
};

struct VariableEntry {
  std::string key;
  std::string full_name;
  std::string unit;
  std::string description;
  RiskDirection risk_direction = RiskDirection::kNeutral;
  std::vector<Alias> aliases;
  bool is_label = false;
};

/// Ordered collection of the 14 predictors plus the label field.
class VariableDictionary {
 public:
  explicit VariableDictionary(std::vector<VariableEntry> entries);

  /// The shipped dictionary with the default risk-direction priors.
  static VariableDictionary standard();

  const VariableEntry& at(std::string_view key) const;
  const VariableEntry* find(std::string_view key) const;
  const std::vector<VariableEntry>& entries() const { return entries_; }
  /// Predictor keys in dictionary order (label excluded).
  const std::vector<std::string>& predictor_keys() const { return predictor_keys_; }

  /// Copy with some risk directions replaced.
  VariableDictionary with_risk_directions(const std::map<std::string, RiskDirection>& overrides) const;

 private:
  std::vector<VariableEntry> entries_;
  std::vector<std::string> predictor_keys_;
};

/// The 14 predictor keys every dataset must provide columns for.
const std::vector<std::string>& standard_predictor_keys();

/// Present predictor values only; a missing value is an absent key.
using FeatureMap = std::map<std::string, double>;

/// One 500 m grid cell.
struct Record {
  std::int64_t row_id = 0;
  double x = 0.0;  // longitude
  double y = 0.0;  // latitude
  std::string huc12;
  FeatureMap predictors;
  std::optional<double> sum_pde;
  std::optional<PdeCategory> label;

  std::optional<double> value(const std::string& key) const;
  bool operator==(const Record&) const = default;
};

bool is_valid_huc12(std::string_view code);

/// Low for 0, Medium for (0,1], High above 1. Throws on negative input.
PdeCategory label_from_sum_pde(double sum_pde);

struct LoadWarning {
  std::size_t line = 0;
  std::optional<std::int64_t> row_id;
  std::string message;
};

struct LoadResult {
  std::vector<Record> records;
  std::vector<LoadWarning> warnings;
};

/// Reads .csv/.tsv (header row) or .jsonl/.json files. "index" is accepted
/// for row_id, "Sum_PDE"/"PDE_category" for the label columns.
LoadResult load_dataset(const std::filesystem::path& path, const VariableDictionary& dictionary);
LoadResult parse_jsonl_dataset(std::string_view content, const VariableDictionary& dictionary);
LoadResult parse_delimited_dataset(std::string_view content, char delimiter,
                                   const VariableDictionary& dictionary);

/// Canonical single-line JSON with a stable key order.
nlohmann::ordered_json record_to_json(const Record& r, const VariableDictionary& dictionary);
std::string serialize_records(const std::vector<Record>& records, const VariableDictionary& dictionary);
void write_records(const std::filesystem::path& path, const std::vector<Record>& records,
                   const VariableDictionary& dictionary);

/// Fractions per level over labeled records; throws when none are labeled.
std::map<PdeCategory, double> class_distribution(const std::vector<Record>& records);

std::string read_file(const std::filesystem::path& path);
void write_file(const std::filesystem::path& path, std::string_view content);

}  // namespace floodrag
