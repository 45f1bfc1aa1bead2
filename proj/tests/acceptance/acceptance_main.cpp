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


// Acceptance checks. Prints one PASS/FAIL line per criterion and exits
// non-zero when any selected criterion fails.

#include <array>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <random>
#include <set>
#include <sstream>

#include "CLI11.hpp"
#include "floodrag/divergence.hpp"
#include "floodrag/downgrade.hpp"
#include "floodrag/evaluation.hpp"
#include "floodrag/knowledge_base.hpp"
#include "floodrag/pipeline.hpp"
#include "floodrag/prompt_forge.hpp"
#include "floodrag/retrieval.hpp"
#include "freeshot_oracle.hpp"
#include "mutations.hpp"
#include "oracles.hpp"
#include "run_support.hpp"

namespace floodrag::acceptance {
namespace {

namespace fs = std::filesystem;
using Clock = std::chrono::steady_clock;

struct Outcome {
  bool pass = false;
  std::string detail;
};

double seconds_since(Clock::time_point t) { return std::chrono::duration<double>(Clock::now() - t).count(); }

std::string fmt(const char* f, double a) {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, a);
  return buf;
}

// Published feature divergence rows: score(0|1+2), score(1|2), js, ks, js, ks.
struct DivergenceRow {
  const char* feature;
  double score_occ, score_sev, js_occ, ks_occ, js_sev, ks_sev;
};

const std::vector<DivergenceRow>& divergence_rows() {
  static const std::vector<DivergenceRow> rows = {
      {"Building Number", 0.6736, 0.0544, 0.685, 0.647, 0.067, 0.025},
      {"Population Number", 0.5621, 0.0909, 0.572, 0.539, 0.102, 0.065},
      {"Foundation Height", 0.5476, 0.1280, 0.568, 0.500, 0.143, 0.093},
      {"Terrain Roughness", 0.4974, 0.1202, 0.543, 0.391, 0.137, 0.081},
      {"FAR", 0.3563, 0.1478, 0.353, 0.364, 0.158, 0.124},
      {"POI Number", 0.3523, 0.1239, 0.364, 0.325, 0.153, 0.056},
      {"Imperviousness", 0.2785, 0.1155, 0.292, 0.247, 0.123, 0.098},
      {"Building Age", 0.2776, 0.1499, 0.286, 0.258, 0.164, 0.117},
      {"Elevation", 0.2574, 0.2088, 0.291, 0.179, 0.225, 0.171},
      {"Flood claims in past 50 yr", 0.2422, 0.1827, 0.259, 0.203, 0.204, 0.133},
      {"Distance to Coast", 0.2091, 0.1831, 0.237, 0.144, 0.205, 0.132},
      {"Distance to Stream", 0.1768, 0.1606, 0.205, 0.111, 0.178, 0.120},
      {"Maximum Rainfall", 0.1651, 0.1850, 0.205, 0.072, 0.227, 0.087},
      {"HAND", 0.1163, 0.2042, 0.140, 0.061, 0.221, 0.165},
  };
  return rows;
}

Outcome divergence_scores() {
  const auto t0 = Clock::now();
  double worst = 0.0;
  std::string worst_name;
  int checked = 0;
  for (const auto& r : divergence_rows()) {
    for (auto [js, ks, printed, side] : {std::tuple{r.js_occ, r.ks_occ, r.score_occ, "0|1+2"},
                                         std::tuple{r.js_sev, r.ks_sev, r.score_sev, "1|2"}}) {
      const double err = std::abs(divergence::composite_score(js, ks, 0.7, 0.3) - printed);
      ++checked;
      if (err > worst) {
        worst = err;
        worst_name = std::string(r.feature) + " " + side;
      }
    }
  }
  const double s = seconds_since(t0);
  return {checked == 28 && worst <= 5e-4 && s < 1.0,
          std::to_string(checked) + " scores, max error " + fmt("%.2e", worst) + " (" + worst_name + "), " +
              fmt("%.3f s", s)};
}

Outcome efficiency_column() {
  const auto t0 = Clock::now();
  struct Row {
    const char* model;
    double severity, cost, printed;
  };
  const std::vector<Row> rows = {
      {"FloodDamageCast*", 0.8436, 0.030, 28.6}, {"gpt-4o-mini", 0.8192, 0.010, 81.9},
      {"gpt-4o", 0.8204, 0.167, 4.9},            {"gpt-4.1", 0.8251, 0.133, 6.2},
      {"gpt-5-mini", 0.8085, 0.023, 35.9},       {"llama-3.1", 0.7873, 0.199, 4.0},
      {"qwen3", 0.8072, 0.132, 6.1},             {"deepseek-r1", 0.8005, 0.050, 16.0},
  };
  std::vector<std::string> misses;
  for (const auto& r : rows) {
    const double e = eval::efficiency(r.severity, r.cost);
    if (std::abs(e - r.printed) > 0.15) {
      misses.push_back(std::string(r.model) + " " + fmt("%.2f", e) + " vs " + fmt("%.1f", r.printed));
    }
  }
  const double s = seconds_since(t0);
  std::string detail = std::to_string(rows.size() - misses.size()) + "/8 rows within 0.15";
  for (const auto& m : misses) detail += "; " + m;
  return {misses.empty() && s < 1.0, detail + ", " + fmt("%.3f s", s)};
}

Outcome margin_checks() {
  // Single-feature stats with sigma + eps = 1 so each class distance is |mu|.
  auto margins = [](double d0, double d1, double d2) {
    kb::StatsByLevel s;
    for (auto [level, d] : {std::pair{PdeCategory::kLow, d0}, {PdeCategory::kMedium, d1}, {PdeCategory::kHigh, d2}}) {
      s[level] = {level, {{"age", {-d, 1.0 - kb::kDefaultEpsilon, 1}}}};
    }
    return kb::boundary_margins({{"age", 0.0}}, s, {{"age", 1.0}});
  };
  const double occ = margins(0.4455, 0.4461, 0.9).m_occ;
  const double sev = margins(0.1, 0.8826, 0.8812).m_sev;
  const bool pass = std::abs(occ - 0.0006) < 1e-12 && std::abs(sev - 0.0013) <= 2e-4;
  return {pass, "m_occ " + fmt("%.6f", occ) + ", m_sev " + fmt("%.6f", sev)};
}

Outcome divergence_oracles() {
  std::mt19937_64 rng(20260101);
  double worst = 0.0;
  for (int i = 0; i < 500; ++i) {
    const auto a = testing::random_discrete_sample(rng);
    const auto b = testing::random_discrete_sample(rng);
    worst = std::max(worst, std::abs(divergence::ks_statistic(a, b) - testing::ks_oracle(a, b)));
    worst = std::max(worst, std::abs(divergence::js_divergence(a, b, 64) - testing::js_oracle(a, b, 64)));
  }
  int invariant = 0;
  for (int i = 0; i < 100; ++i) {
    const auto a = testing::random_discrete_sample(rng);
    const auto b = testing::random_discrete_sample(rng);
    const double k = 0.1 + static_cast<double>(rng() % 100) / 50.0;
    auto f = [k](double x) { return std::exp(k * x) + 3.0 * x - 7.0; };
    std::vector<double> ta, tb;
    for (double x : a) ta.push_back(f(x));
    for (double x : b) tb.push_back(f(x));
    invariant += divergence::ks_statistic(a, b) == divergence::ks_statistic(ta, tb);
  }
  return {worst <= 1e-9 && invariant == 100,
          "500 samples max error " + fmt("%.2e", worst) + ", monotone invariance " + std::to_string(invariant) + "/100"};
}

Outcome freeshot_oracle() {
  std::mt19937_64 rng(515);
  const kb::Weights w = {{"FAR", 0.2}, {"age", 0.5}, {"hand", 0.3}};
  int equal = 0;
  for (int i = 0; i < 50; ++i) {
    const auto scope = testing::random_scope(rng, 3 + rng() % 198);
    std::vector<const kb::KbEntry*> ptrs;
    for (const auto& e : scope) ptrs.push_back(&e);
    const auto lib = kb::build_library("s", ptrs, w);
    equal += testing::library_selection(lib) == testing::oracle_select(scope, w, kb::kDefaultEpsilon);
  }
  return {equal == 50, std::to_string(equal) + "/50 scopes equal the exhaustive oracle"};
}

Outcome retrieval_oracle() {
  std::mt19937_64 rng(6);
  // Half the records in a dense 11 km box, half spread over a sparse region,
  // so queries see every neighbor count from 0 to 3.
  std::uniform_real_distribution<double> dense_lon(-95.50, -95.40), dense_lat(29.70, 29.80);
  std::uniform_real_distribution<double> wide_lon(-96.50, -94.50), wide_lat(29.00, 30.50);
  std::vector<kb::KbEntry> entries(10000);
  for (std::size_t i = 0; i < entries.size(); ++i) {
    auto& r = entries[i].record;
    r.row_id = static_cast<std::int64_t>(i);
    r.x = i % 2 == 0 ? dense_lon(rng) : wide_lon(rng);
    r.y = i % 2 == 0 ? dense_lat(rng) : wide_lat(rng);
    r.label = PdeCategory::kLow;
  }
  const retrieval::KbIndex index(entries);
  int equal = 0;
  bool bounds = true;
  std::array<int, 4> by_count{};
  for (int q = 0; q < 1000; ++q) {
    Record t;
    t.row_id = 100000 + q;
    t.x = q % 2 == 0 ? dense_lon(rng) : wide_lon(rng);
    t.y = q % 2 == 0 ? dense_lat(rng) : wide_lat(rng);
    std::vector<std::pair<double, std::int64_t>> scan;
    for (const auto& e : entries) {
      const double d = retrieval::haversine_km(t.x, t.y, e.record.x, e.record.y);
      if (d <= 1.0) scan.emplace_back(d, e.record.row_id);
    }
    std::sort(scan.begin(), scan.end());
    if (scan.size() > 3) scan.resize(3);
    const auto got = retrieval::find_neighbors(t, index);
    if (got.size() < by_count.size()) ++by_count[got.size()];
    bool same = got.size() == scan.size();
    for (std::size_t i = 0; same && i < got.size(); ++i) {
      same = got[i].entry->record.row_id == scan[i].second && got[i].distance_km == scan[i].first;
      bounds = bounds && got[i].distance_km <= 1.0;
    }
    bounds = bounds && got.size() <= 3;
    equal += same;
  }
  return {equal == 1000 && bounds,
          std::to_string(equal) + "/1000 queries equal the scan; queries with 0/1/2/3 neighbors: " +
              std::to_string(by_count[0]) + "/" + std::to_string(by_count[1]) + "/" + std::to_string(by_count[2]) +
              "/" + std::to_string(by_count[3])};
}

Outcome injection_policy() {
  using H = retrieval::HardSlot;
  struct Expect {
    int protos;
    std::vector<H> hard;
  };
  auto expected = [](int count, int nearest) -> Expect {
    if (count == 3) return {0, {}};
    if (count == 2) {
      if (nearest == 2) return {1, {H::kSeverityFor2}};
      return {1, {nearest == 0 ? H::kOccurrenceFor0 : H::kOccurrenceFor1}};
    }
    if (count == 1) {
      if (nearest == 2) return {1, {H::kSeverityFor1, H::kSeverityFor2}};
      return {1, {H::kOccurrenceFor0, H::kOccurrenceFor1}};
    }
    return {2, {H::kOccurrenceFor0, H::kSeverityFor2}};
  };
  int ok = 0;
  for (int count = 0; count <= 3; ++count) {
    for (int nearest = 0; nearest < 3; ++nearest) {
      const auto p = retrieval::plan_injection(count, category_from_int(nearest));
      const auto e = expected(count, nearest);
      ok += p.neighbor_count == count && p.prototypes_per_level == e.protos && p.hard_examples == e.hard;
    }
  }
  return {ok == 12, std::to_string(ok) + "/12 cases match the policy"};
}

Outcome parser_strictness() {
  const auto trajectory = testing::read_fixture("appendix_c_trajectory.txt");
  const auto prediction = testing::read_fixture("appendix_e_prediction.jsonl");
  const bool accept = prompt::parse_trajectory(trajectory).ok() && prompt::parse_prediction(prediction).ok();
  int rejected = 0, named = 0, total = 0;
  std::vector<std::string> wrong;
  for (const auto& m : testing::mutations()) {
    ++total;
    const auto v = m.prediction_line ? prompt::parse_prediction(m.edit(prediction)).violations
                                     : prompt::parse_trajectory(m.edit(trajectory)).violations;
    rejected += !v.empty();
    if (testing::has_violation(v, m.expected_violation)) {
      ++named;
    } else {
      wrong.push_back(m.name);
    }
  }
  std::string detail = std::string("samples ") + (accept ? "accepted" : "REJECTED") + ", " + std::to_string(rejected) +
                       "/" + std::to_string(total) + " mutations rejected, " + std::to_string(named) +
                       " with the expected violation";
  for (const auto& w : wrong) detail += "; wrong: " + w;
  return {accept && total >= 20 && rejected == total && named == total, detail};
}

std::string random_think(std::mt19937_64& rng, const downgrade::CueLexicon& l) {
  static const std::vector<std::string> filler = {"the parcel sits near a bayou", "high damage seems plausible",
                                                  "class 2 is possible", "evidence of damage is mixed",
                                                  "elevation is low", "severe rainfall fell"};
  std::string out;
  for (int n = 1 + static_cast<int>(rng() % 6); n > 0; --n) {
    std::string s = filler[rng() % filler.size()];
    switch (rng() % 4) {
      case 0: s += " and " + l.light[rng() % l.light.size()]; break;
      case 1: s += " with " + l.severity[rng() % l.severity.size()]; break;
      case 2: s += ", " + l.uncertain[rng() % l.uncertain.size()]; break;
      default: break;
    }
    out += s + ". ";
  }
  return out;
}

Outcome downgrade_properties() {
  using downgrade::FiredRule;
  const auto lex = downgrade::CueLexicon::standard();
  std::mt19937_64 rng(9);
  int violations = 0, fired = 0;
  for (int i = 0; i < 10000; ++i) {
    const auto pred = category_from_int(static_cast<long long>(rng() % 3));
    const auto think = random_think(rng, lex);
    std::vector<downgrade::NeighborEvidence> n;
    for (auto k = rng() % 4; k > 0; --k) {
      n.push_back({category_from_int(static_cast<long long>(rng() % 3)), random_think(rng, lex)});
    }
    const auto d = downgrade::apply_downgrade(pred, think, n);
    const int in = to_int(pred), out = to_int(d.output_label);
    fired += d.fired_rule != FiredRule::kNone;
    const bool ok = out <= in && in - out <= 1 && (pred != PdeCategory::kLow || out == in) &&
                    (d.fired_rule == FiredRule::kNone) == (out == in) && downgrade::apply_downgrade(pred, think, n) == d;
    violations += !ok;
  }

  const std::string light = "The flooding was minor and shallow, a brief surface-level event that quickly receded.";
  const auto s1 = downgrade::apply_downgrade(
      PdeCategory::kHigh, light, {{PdeCategory::kLow, "minor shallow ponding"}, {PdeCategory::kMedium, "brief, localized"}});
  const auto s2 = downgrade::apply_downgrade(PdeCategory::kLow, light + " Not enough evidence.", {});
  const auto s3 = downgrade::apply_downgrade(PdeCategory::kMedium,
                                             "There is not enough evidence of damage; any water was minor.",
                                             {{PdeCategory::kLow, "minor, passable"}, {PdeCategory::kLow, "shallow, brief"}});
  const int scenarios = (s1.fired_rule == FiredRule::kTwoToOne && s1.output_label == PdeCategory::kMedium &&
                         s1.neighbor_signal == downgrade::NeighborSignal::kConfirming) +
                        (s2.fired_rule == FiredRule::kNone && s2.output_label == PdeCategory::kLow) +
                        (s3.fired_rule == FiredRule::kOneToZero && s3.output_label == PdeCategory::kLow);
  return {violations == 0 && scenarios == 3,
          "10000 inputs, " + std::to_string(violations) + " property violations, " + std::to_string(fired) +
              " rules fired, " + std::to_string(scenarios) + "/3 exemplar scenarios"};
}

Outcome metric_oracles() {
  std::mt19937_64 rng(10);
  double worst = 0.0;
  for (int t = 0; t < 1000; ++t) {
    const std::size_t n = 1 + rng() % 60;
    std::vector<int> y(n), p(n);
    std::vector<PdeCategory> yc, pc;
    for (std::size_t i = 0; i < n; ++i) {
      y[i] = static_cast<int>(rng() % 3);
      p[i] = static_cast<int>(rng() % 3);
      yc.push_back(category_from_int(y[i]));
      pc.push_back(category_from_int(p[i]));
    }
    double correct = 0, abs_err = 0, f1 = 0, dn = 0, dok = 0;
    for (std::size_t i = 0; i < n; ++i) {
      correct += y[i] == p[i];
      abs_err += std::abs(y[i] - p[i]);
      if (y[i] > 0) {
        ++dn;
        dok += y[i] == p[i];
      }
    }
    std::optional<double> r2;
    for (int c = 0; c < 3; ++c) {
      double tp = 0, fp = 0, fn = 0;
      for (std::size_t i = 0; i < n; ++i) {
        tp += p[i] == c && y[i] == c;
        fp += p[i] == c && y[i] != c;
        fn += p[i] != c && y[i] == c;
      }
      f1 += tp == 0 ? 0.0 : 2 * tp / (2 * tp + fp + fn);
      if (c == 2 && tp + fn > 0) r2 = tp / (tp + fn);
    }
    const double dn_ = static_cast<double>(n);
    const auto m = eval::classification_metrics(yc, pc);
    const double sev = eval::severity_score(yc, pc);
    for (double e : {std::abs(m.overall_accuracy - correct / dn_), std::abs(m.macro_f1 - f1 / 3.0),
                     std::abs(sev - (1.0 - abs_err / dn_ / 2.0)), std::abs(m.severity_score - sev)}) {
      worst = std::max(worst, e);
    }
    if (m.damage_class_accuracy.has_value() != (dn > 0) || m.recall_2.has_value() != r2.has_value()) worst = 1.0;
    if (dn > 0) worst = std::max(worst, std::abs(*m.damage_class_accuracy - dok / dn));
    if (r2) worst = std::max(worst, std::abs(*m.recall_2 - *r2));
  }
  return {worst <= 1e-12, "1000 label vectors, max deviation " + fmt("%.2e", worst)};
}

fs::path run_root() { return fs::temp_directory_path() / "floodrag_acceptance"; }

Outcome end_to_end_determinism() {
  const auto t0 = Clock::now();
  const auto dir = run_root() / "e2e";
  const auto config = testing::scripted_config(dir);
  std::string predictions[2], metrics[2];
  std::size_t failed = 0, rows = 0;
  for (int i = 0; i < 2; ++i) {
    fs::remove_all(dir);
    failed += pipeline::run_all(config).failed_rows;
    predictions[i] = read_file(dir / "predictions.jsonl");
    metrics[i] = read_file(dir / "metrics.json");
  }
  rows = testing::read_jsonl(dir / "predictions.jsonl").size();
  std::size_t records = testing::read_jsonl(config.train_path).size() + testing::read_jsonl(config.test_path).size();
  const double s = seconds_since(t0);
  const bool same = predictions[0] == predictions[1] && metrics[0] == metrics[1];
  return {same && failed == 0 && records == 200 && s < 60.0,
          std::to_string(records) + " records, " + std::to_string(rows) + " predictions, " +
              (same ? "byte-identical" : "DIFFERENT") + " across two runs, " + std::to_string(failed) +
              " failed rows, " + fmt("%.2f s", s)};
}

Outcome ablation_monotone() {
  const auto dir = run_root() / "ablation";
  fs::remove_all(dir);
  const auto config = testing::scripted_config(dir);
  pipeline::run_all(config);
  pipeline::cmd_ablation(config);
  const auto iii = testing::ablation_labels(dir, "III");
  const auto iv = testing::ablation_labels(dir, "IV");
  int above = 0, mismatched = 0, fired = 0;
  for (const auto& [id, label] : iv.final_label) {
    auto base = iii.final_label.find(id);
    auto rule = iv.fired_rule.find(id);
    if (base == iii.final_label.end() || rule == iv.fired_rule.end()) {
      ++mismatched;
      continue;
    }
    above += label > base->second;
    const bool did_fire = rule->second != "none";
    fired += did_fire;
    mismatched += (label != base->second) != did_fire;
  }
  const bool pass = !iv.final_label.empty() && iv.final_label.size() == iii.final_label.size() && above == 0 &&
                    mismatched == 0;
  return {pass, std::to_string(iv.final_label.size()) + " rows, " + std::to_string(fired) + " downgrades, " +
                    std::to_string(above) + " rows above III, " + std::to_string(mismatched) + " unexplained differences"};
}

struct Criterion {
  int id;
  const char* name;
  std::function<Outcome()> run;
};

const std::vector<Criterion>& criteria() {
  static const std::vector<Criterion> all = {
      {1, "divergence composite scores", divergence_scores},
      {2, "efficiency column", efficiency_column},
      {3, "boundary margin checks", margin_checks},
      {4, "divergence oracles", divergence_oracles},
      {5, "free-shot oracle equivalence", freeshot_oracle},
      {6, "retrieval oracle", retrieval_oracle},
      {7, "injection policy", injection_policy},
      {8, "parser strictness", parser_strictness},
      {9, "downgrade properties", downgrade_properties},
      {10, "metric oracles", metric_oracles},
      {11, "end-to-end determinism", end_to_end_determinism},
      {12, "ablation monotone downgrade", ablation_monotone},
  };
  return all;
}

}  // namespace
}  // namespace floodrag::acceptance

int main(int argc, char** argv) {
  using namespace floodrag::acceptance;
  CLI::App app{"floodrag acceptance checks"};
  std::vector<int> only;
  app.add_option("--only", only, "Run only these criterion numbers")->check(CLI::Range(1, 12));
  CLI11_PARSE(app, argc, argv);

  int failed = 0;
  for (const auto& c : criteria()) {
    if (!only.empty() && std::find(only.begin(), only.end(), c.id) == only.end()) continue;
    Outcome o;
    try {
      o = c.run();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    std::printf("%s criterion %2d: %s | %s\n", o.pass ? "PASS" : "FAIL", c.id, c.name, o.detail.c_str());
    std::fflush(stdout);
    failed += !o.pass;
  }
  return failed == 0 ? 0 : 1;
}
