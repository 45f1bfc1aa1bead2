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

#include "floodrag/core_model.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <set>
#include <sstream>
#include <unordered_map>

#include "floodrag/text_util.hpp"

namespace floodrag {

using nlohmann::json;
using nlohmann::ordered_json;

PdeCategory category_from_int(long long v) {
  if (v < 0 || v > 2) throw std::invalid_argument("PDE category out of range: " + std::to_string(v));
  return static_cast<PdeCategory>(v);
}

std::string_view category_name(PdeCategory c) {
  switch (c) {
    case PdeCategory::kLow: return "Low";
    case PdeCategory::kMedium: return "Medium";
    case PdeCategory::kHigh: return "High";
  }
  return "?";
}

std::string_view risk_direction_name(RiskDirection d) {
  switch (d) {
    case RiskDirection::kHigherIsRiskier: return "higher_is_riskier";
    case RiskDirection::kHigherIsProtective: return "higher_is_protective";
    case RiskDirection::kNeutral: return "neutral";
  }
  return "neutral";
}

RiskDirection risk_direction_from_name(std::string_view name) {
  if (name == "higher_is_riskier") return RiskDirection::kHigherIsRiskier;
  if (name == "higher_is_protective") return RiskDirection::kHigherIsProtective;
  if (name == "neutral") return RiskDirection::kNeutral;
  throw Error("unknown risk direction: " + std::string(name));
}

// ---------------------------------------------------------------------------
// Dictionary

VariableDictionary::VariableDictionary(std::vector<VariableEntry> entries) : entries_(std::move(entries)) {
  std::set<std::string> seen;
  for (const auto& e : entries_) {
    if (e.key.empty()) throw std::invalid_argument("variable key must be non-empty");
    if (!seen.insert(e.key).second) throw std::invalid_argument("duplicate variable key: " + e.key);
    if (!e.is_label) predictor_keys_.push_back(e.key);
  }
}

namespace {

VariableEntry make_entry(std::string key, std::string full_name, std::string unit, std::string description,
                         RiskDirection dir, std::vector<Alias> aliases) {
  VariableEntry e;
  e.key = std::move(key);
  e.full_name = std::move(full_name);
  e.unit = std::move(unit);
  e.description = std::move(description);
  e.risk_direction = dir;
  e.aliases = std::move(aliases);
  return e;
}

}  // namespace

VariableDictionary VariableDictionary::standard() {
  constexpr auto kRisk = RiskDirection::kHigherIsRiskier;
  constexpr auto kProt = RiskDirection::kHigherIsProtective;
  // "FAR" and "HAND" double as English words, so only the upper-case forms count.
  std::vector<VariableEntry> v = {
      make_entry("age", "Building Age", "years", "median age of buildings in the cell", kRisk,
                 {{"age"}, {"building age"}}),
      make_entry("FAR", "Floor Area Ratio", "", "total building floor area divided by cell land area", kRisk,
                 {{"FAR", true}, {"floor area ratio"}}),
      make_entry("Poly_num", "Building Number", "count", "number of building footprints in the cell", kRisk,
                 {{"Poly_num"}, {"building number"}, {"number of buildings"}, {"building count"}, {"buildings"}}),
      make_entry("poi_num", "POI Number", "count", "number of points of interest in the cell", kRisk,
                 {{"poi_num"}, {"POI", true}, {"point of interest"}, {"points of interest"}}),
      make_entry("fndn", "Foundation Height", "ft", "mean foundation height above grade", kProt,
                 {{"fndn"}, {"foundation"}}),
      make_entry("Popu_num", "Population Number", "persons", "resident population in the cell", kRisk,
                 {{"Popu_num"}, {"population"}}),
      make_entry("elevation", "Elevation", "ft", "mean ground elevation", kProt, {{"elevation"}}),
      make_entry("dis_coa", "Distance to Coast", "km", "distance from the cell to the coastline", kProt,
                 {{"dis_coa"}, {"distance to coast"}, {"from coast"}, {"coast"}}),
      make_entry("impervious", "Imperviousness", "%", "share of impervious land cover", kRisk,
                 {{"impervious"}, {"imperviousness"}}),
      make_entry("roughness", "Terrain Roughness", "", "terrain roughness index", kProt, {{"roughness"}}),
      make_entry("dis_stream", "Distance to Stream", "m", "distance from the cell to the nearest stream", kProt,
                 {{"dis_stream"}, {"distance to stream"}, {"stream proximity"}, {"stream"}}),
      make_entry("hand", "Height Above Nearest Drainage", "m", "height of the terrain above the nearest drainage",
                 kProt, {{"HAND", true}, {"height above nearest drainage"}}),
      make_entry("claims_past_50yr", "Flood Claims in the Past 50 Years", "count",
                 "historical flood insurance claims in the cell", kRisk,
                 {{"claims_past_50yr"}, {"flood claims"}, {"prior claims"}, {"claims"}}),
      make_entry("Rain_max", "Maximum Rainfall", "in", "maximum event rainfall", kRisk,
                 {{"Rain_max"}, {"rainfall"}, {"rain"}}),
  };
  VariableEntry label = make_entry("PDE_category", "Property Damage Extent", "",
                                   "ordinal damage level: 0 Low, 1 Medium, 2 High", RiskDirection::kNeutral, {});
  label.is_label = true;
  v.push_back(std::move(label));
  return VariableDictionary(std::move(v));
}

const VariableEntry* VariableDictionary::find(std::string_view key) const {
  for (const auto& e : entries_) {
    if (e.key == key) return &e;
  }
  return nullptr;
}

const VariableEntry& VariableDictionary::at(std::string_view key) const {
  const auto* e = find(key);
  if (e == nullptr) throw std::out_of_range("unknown variable: " + std::string(key));
  return *e;
}

VariableDictionary VariableDictionary::with_risk_directions(
    const std::map<std::string, RiskDirection>& overrides) const {
  auto copy = entries_;
  for (const auto& [key, dir] : overrides) {
    auto it = std::find_if(copy.begin(), copy.end(), [&](const VariableEntry& e) { return e.key == key; });
    if (it == copy.end()) throw std::out_of_range("unknown variable: " + key);
    it->risk_direction = dir;
  }
  return VariableDictionary(std::move(copy));
}

const std::vector<std::string>& standard_predictor_keys() {
  static const std::vector<std::string> keys = VariableDictionary::standard().predictor_keys();
  return keys;
}

// ---------------------------------------------------------------------------
// Record helpers

std::optional<double> Record::value(const std::string& key) const {
  auto it = predictors.find(key);
  if (it == predictors.end()) return std::nullopt;
  return it->second;
}

bool is_valid_huc12(std::string_view code) {
  return code.size() == 12 && std::all_of(code.begin(), code.end(), [](char c) { return c >= '0' && c <= '9'; });
}

PdeCategory label_from_sum_pde(double sum_pde) {
  if (std::isnan(sum_pde) || sum_pde < 0.0) throw std::invalid_argument("Sum_PDE must be nonnegative");
  if (sum_pde == 0.0) return PdeCategory::kLow;
  if (sum_pde <= 1.0) return PdeCategory::kMedium;
  return PdeCategory::kHigh;
}

// ---------------------------------------------------------------------------
// Ingestion

namespace {

bool is_missing_token(std::string_view s) {
  s = text::trim(s);
  if (s.empty()) return true;
  const auto low = text::to_lower(s);
  return low == "null" || low == "na" || low == "nan" || low == "none" || low == "n/a";
}

std::optional<double> parse_double(std::string_view s) {
  s = text::trim(s);
  if (s.empty()) return std::nullopt;
  // from_chars rejects a leading '+', strtod accepts hex; keep it strict.
  if (s.front() == '+') s.remove_prefix(1);
  double v = 0.0;
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || ptr != s.data() + s.size() || !std::isfinite(v)) return std::nullopt;
  return v;
}

std::optional<std::int64_t> parse_int(std::string_view s) {
  s = text::trim(s);
  std::int64_t v = 0;
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec == std::errc() && ptr == s.data() + s.size()) return v;
  // "429.0" style ids from spreadsheet exports.
  auto d = parse_double(s);
  if (d && std::floor(*d) == *d && std::fabs(*d) < 9.0e15) return static_cast<std::int64_t>(*d);
  return std::nullopt;
}

/// Untyped row: column name -> raw cell (nullopt for explicit missing).
using RawRow = std::map<std::string, std::optional<std::string>>;

const std::vector<std::string>& row_id_columns() {
  static const std::vector<std::string> c = {"row_id", "index"};
  return c;
}
const std::vector<std::string>& sum_columns() {
  static const std::vector<std::string> c = {"Sum_PDE", "sum_pde"};
  return c;
}
const std::vector<std::string>& label_columns() {
  static const std::vector<std::string> c = {"PDE_category", "label"};
  return c;
}

const std::optional<std::string>* lookup(const RawRow& row, const std::vector<std::string>& names) {
  for (const auto& n : names) {
    auto it = row.find(n);
    if (it != row.end()) return &it->second;
  }
  return nullptr;
}

class RowBuilder {
 public:
  explicit RowBuilder(const VariableDictionary& dictionary) : dictionary_(dictionary) {}

  void add(const RawRow& row, std::size_t line) {
    auto warn = [&](std::optional<std::int64_t> id, std::string msg) {
      result_.warnings.push_back({line, id, std::move(msg)});
    };

    const auto* id_cell = lookup(row, row_id_columns());
    std::optional<std::int64_t> row_id;
    if (id_cell != nullptr && id_cell->has_value()) row_id = parse_int(**id_cell);
    if (!row_id) {
      warn(std::nullopt, "missing or malformed row_id");
      return;
    }

    Record r;
    r.row_id = *row_id;

    auto coord = [&](const char* name) -> std::optional<double> {
      auto it = row.find(name);
      if (it == row.end() || !it->second) return std::nullopt;
      return parse_double(*it->second);
    };
    const auto x = coord("x");
    const auto y = coord("y");
    if (!x || !y || *x < -180.0 || *x > 180.0 || *y < -90.0 || *y > 90.0) {
      warn(row_id, "unparseable coordinates");
      return;
    }
    r.x = *x;
    r.y = *y;

    auto huc_it = row.find("huc12");
    if (huc_it == row.end() || !huc_it->second || !is_valid_huc12(text::trim(*huc_it->second))) {
      warn(row_id, "malformed huc12");
      return;
    }
    r.huc12 = std::string(text::trim(*huc_it->second));

    for (const auto& key : dictionary_.predictor_keys()) {
      auto it = row.find(key);
      if (it == row.end() || !it->second || is_missing_token(*it->second)) continue;
      if (auto v = parse_double(*it->second)) {
        r.predictors[key] = *v;
      } else {
        warn(row_id, "unparseable value for " + key + " treated as missing");
      }
    }

    if (const auto* cell = lookup(row, sum_columns()); cell != nullptr && cell->has_value() &&
                                                       !is_missing_token(**cell)) {
      auto v = parse_double(**cell);
      if (!v || *v < 0.0) {
        warn(row_id, "malformed Sum_PDE");
        return;
      }
      r.sum_pde = *v;
    }
    if (const auto* cell = lookup(row, label_columns()); cell != nullptr && cell->has_value() &&
                                                         !is_missing_token(**cell)) {
      auto v = parse_int(**cell);
      if (!v || *v < 0 || *v > 2) {
        warn(row_id, "malformed PDE_category");
        return;
      }
      r.label = category_from_int(*v);
    }
    if (r.sum_pde) {
      const auto derived = label_from_sum_pde(*r.sum_pde);
      if (r.label && *r.label != derived) {
        warn(row_id, "PDE_category inconsistent with Sum_PDE; using the Sum_PDE level");
      }
      r.label = derived;
    }

    if (!seen_.insert(r.row_id).second) {
      warn(row_id, "duplicate row_id skipped");
      return;
    }
    result_.records.push_back(std::move(r));
  }

  void warn_header(std::string msg) { result_.warnings.push_back({1, std::nullopt, std::move(msg)}); }

  LoadResult finish() && {
    if (result_.records.empty()) throw Error("empty dataset");
    return std::move(result_);
  }

 private:
  const VariableDictionary& dictionary_;
  LoadResult result_;
  std::set<std::int64_t> seen_;
};

std::optional<std::string> json_cell(const json& v) {
  if (v.is_null()) return std::nullopt;
  if (v.is_string()) return v.get<std::string>();
  if (v.is_number_integer()) return std::to_string(v.get<long long>());
  if (v.is_number_unsigned()) return std::to_string(v.get<unsigned long long>());
  if (v.is_number_float()) {
    // Shortest round-trip representation keeps ingestion lossless.
    return json(v.get<double>()).dump();
  }
  if (v.is_boolean()) return v.get<bool>() ? "1" : "0";
  return v.dump();
}

std::vector<std::string> split_delimited(std::string_view line, char delim) {
  std::vector<std::string> out;
  std::string cur;
  bool quoted = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    const char c = line[i];
    if (quoted) {
      if (c == '"') {
        if (i + 1 < line.size() && line[i + 1] == '"') {
          cur.push_back('"');
          ++i;
        } else {
          quoted = false;
        }
      } else {
        cur.push_back(c);
      }
    } else if (c == '"') {
      quoted = true;
    } else if (c == delim) {
      out.push_back(std::move(cur));
      cur.clear();
    } else {
      cur.push_back(c);
    }
  }
  out.push_back(std::move(cur));
  return out;
}

std::vector<std::string_view> split_lines(std::string_view content) {
  std::vector<std::string_view> lines;
  std::size_t start = 0;
  while (start <= content.size()) {
    auto end = content.find('\n', start);
    if (end == std::string_view::npos) end = content.size();
    auto line = content.substr(start, end - start);
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
    lines.push_back(line);
    start = end + 1;
  }
  return lines;
}

}  // namespace

LoadResult parse_jsonl_dataset(std::string_view content, const VariableDictionary& dictionary) {
  RowBuilder builder(dictionary);
  const auto lines = split_lines(content);
  for (std::size_t i = 0; i < lines.size(); ++i) {
    const auto line = text::trim(lines[i]);
    if (line.empty()) continue;
    json obj = json::parse(line, nullptr, false);
    if (obj.is_discarded() || !obj.is_object()) {
      builder.warn_header("line " + std::to_string(i + 1) + ": malformed JSON skipped");
      continue;
    }
    RawRow row;
    for (auto it = obj.begin(); it != obj.end(); ++it) row[it.key()] = json_cell(it.value());
    builder.add(row, i + 1);
  }
  return std::move(builder).finish();
}

LoadResult parse_delimited_dataset(std::string_view content, char delimiter, const VariableDictionary& dictionary) {
  const auto lines = split_lines(content);
  std::size_t first = 0;
  while (first < lines.size() && text::trim(lines[first]).empty()) ++first;
  if (first == lines.size()) throw Error("empty dataset");

  auto header = split_delimited(lines[first], delimiter);
  for (auto& h : header) h = std::string(text::trim(h));
  auto has = [&](const std::vector<std::string>& names) {
    return std::any_of(names.begin(), names.end(), [&](const std::string& n) {
      return std::find(header.begin(), header.end(), n) != header.end();
    });
  };
  for (const auto& required : std::vector<std::vector<std::string>>{row_id_columns(), {"x"}, {"y"}, {"huc12"}}) {
    if (!has(required)) throw Error("header missing mandatory column: " + required.front());
  }

  RowBuilder builder(dictionary);
  for (const auto& key : dictionary.predictor_keys()) {
    if (!has({key})) builder.warn_header("column absent, all values missing: " + key);
  }
  for (std::size_t i = first + 1; i < lines.size(); ++i) {
    if (text::trim(lines[i]).empty()) continue;
    const auto cells = split_delimited(lines[i], delimiter);
    RawRow row;
    for (std::size_t c = 0; c < header.size(); ++c) {
      if (c < cells.size() && !is_missing_token(cells[c])) {
        row[header[c]] = cells[c];
      } else {
        row[header[c]] = std::nullopt;
      }
    }
    builder.add(row, i + 1);
  }
  return std::move(builder).finish();
}

std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot read file: " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_file(const std::filesystem::path& path, std::string_view content) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error("cannot write file: " + path.string());
  out.write(content.data(), static_cast<std::streamsize>(content.size()));
}

LoadResult load_dataset(const std::filesystem::path& path, const VariableDictionary& dictionary) {
  const std::string content = read_file(path);
  const auto ext = text::to_lower(path.extension().string());
  if (ext == ".jsonl" || ext == ".json" || ext == ".ndjson") return parse_jsonl_dataset(content, dictionary);
  if (ext == ".tsv") return parse_delimited_dataset(content, '\t', dictionary);
  if (ext == ".csv" || ext == ".txt") return parse_delimited_dataset(content, ',', dictionary);
  throw Error("unsupported dataset extension: " + ext);
}

ordered_json record_to_json(const Record& r, const VariableDictionary& dictionary) {
  ordered_json j;
  j["row_id"] = r.row_id;
  j["x"] = r.x;
  j["y"] = r.y;
  j["huc12"] = r.huc12;
  for (const auto& key : dictionary.predictor_keys()) {
    if (auto v = r.value(key)) {
      j[key] = *v;
    } else {
      j[key] = nullptr;
    }
  }
  j["Sum_PDE"] = r.sum_pde ? ordered_json(*r.sum_pde) : ordered_json(nullptr);
  j["PDE_category"] = r.label ? ordered_json(to_int(*r.label)) : ordered_json(nullptr);
  return j;
}

std::string serialize_records(const std::vector<Record>& records, const VariableDictionary& dictionary) {
  std::string out;
  for (const auto& r : records) {
    out += record_to_json(r, dictionary).dump();
    out += '\n';
  }
  return out;
}

void write_records(const std::filesystem::path& path, const std::vector<Record>& records,
                   const VariableDictionary& dictionary) {
  write_file(path, serialize_records(records, dictionary));
}

std::map<PdeCategory, double> class_distribution(const std::vector<Record>& records) {
  std::array<std::size_t, 3> counts{};
  std::size_t total = 0;
  for (const auto& r : records) {
    if (!r.label) continue;
    ++counts[static_cast<std::size_t>(to_int(*r.label))];
    ++total;
  }
  if (total == 0) throw Error("no labeled records");
  std::map<PdeCategory, double> out;
  for (auto level : kAllLevels) {
    out[level] = static_cast<double>(counts[static_cast<std::size_t>(to_int(level))]) / static_cast<double>(total);
  }
  return out;
}

}  // namespace floodrag
