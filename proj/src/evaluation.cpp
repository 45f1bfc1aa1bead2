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

#include "floodrag/evaluation.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <numeric>
#include <stdexcept>

#include "floodrag/text_util.hpp"

namespace floodrag::eval {

namespace {

void check_lengths(const std::vector<PdeCategory>& y, const std::vector<PdeCategory>& yhat) {
  if (y.size() != yhat.size()) throw std::invalid_argument("label vectors differ in length");
  if (y.empty()) throw std::invalid_argument("label vectors are empty");
}

std::size_t idx(PdeCategory c) { return static_cast<std::size_t>(to_int(c)); }

}  // namespace

double severity_score(const std::vector<PdeCategory>& y, const std::vector<PdeCategory>& yhat) {
  check_lengths(y, yhat);
  double sum = 0.0;
  for (std::size_t i = 0; i < y.size(); ++i) sum += 1.0 - std::abs(to_int(y[i]) - to_int(yhat[i])) / 2.0;
  return sum / static_cast<double>(y.size());
}

PredictionMetrics classification_metrics(const std::vector<PdeCategory>& y, const std::vector<PdeCategory>& yhat) {
  check_lengths(y, yhat);
  PredictionMetrics m;
  m.n = y.size();
  for (std::size_t i = 0; i < y.size(); ++i) ++m.confusion[idx(y[i])][idx(yhat[i])];

  std::size_t correct = 0;
  for (std::size_t c = 0; c < 3; ++c) correct += m.confusion[c][c];
  m.overall_accuracy = static_cast<double>(correct) / static_cast<double>(m.n);

  for (std::size_t c = 0; c < 3; ++c) {
    const auto tp = m.confusion[c][c];
    std::size_t pred_c = 0, true_c = 0;
    for (std::size_t k = 0; k < 3; ++k) {
      pred_c += m.confusion[k][c];
      true_c += m.confusion[c][k];
    }
    const auto denom = pred_c + true_c;
    m.per_class_f1[c] = denom == 0 ? 0.0 : 2.0 * static_cast<double>(tp) / static_cast<double>(denom);
  }
  m.macro_f1 = (m.per_class_f1[0] + m.per_class_f1[1] + m.per_class_f1[2]) / 3.0;
  m.severity_score = severity_score(y, yhat);

  const std::size_t damage = std::accumulate(m.confusion[1].begin(), m.confusion[1].end(), std::size_t{0}) +
                             std::accumulate(m.confusion[2].begin(), m.confusion[2].end(), std::size_t{0});
  if (damage > 0) {
    m.damage_class_accuracy = static_cast<double>(m.confusion[1][1] + m.confusion[2][2]) / static_cast<double>(damage);
  }
  const std::size_t true2 = std::accumulate(m.confusion[2].begin(), m.confusion[2].end(), std::size_t{0});
  if (true2 > 0) m.recall_2 = static_cast<double>(m.confusion[2][2]) / static_cast<double>(true2);
  return m;
}

// ---------------------------------------------------------------------------
// Label agreement

namespace {

std::optional<PdeCategory> label_token_after(std::string_view text, std::size_t pos, bool allow_words) {
  while (pos < text.size() && std::isspace(static_cast<unsigned char>(text[pos])) != 0) ++pos;
  if (pos >= text.size()) return std::nullopt;
  const char c = text[pos];
  if (c >= '0' && c <= '2') {
    const bool bounded = pos + 1 >= text.size() || std::isdigit(static_cast<unsigned char>(text[pos + 1])) == 0;
    if (bounded) return category_from_int(c - '0');
    return std::nullopt;
  }
  if (!allow_words) return std::nullopt;
  const auto rest = text::to_lower(text.substr(pos, 8));
  if (text::starts_with(rest, "zero") || text::starts_with(rest, "low")) return PdeCategory::kLow;
  if (text::starts_with(rest, "one") || text::starts_with(rest, "medium")) return PdeCategory::kMedium;
  if (text::starts_with(rest, "two") || text::starts_with(rest, "high")) return PdeCategory::kHigh;
  return std::nullopt;
}

}  // namespace

std::optional<PdeCategory> implied_label(std::string_view think) {
  if (auto pos = think.rfind(prompt::kClosingPhrase); pos != std::string_view::npos) {
    if (auto l = label_token_after(think, pos + prompt::kClosingPhrase.size(), true)) return l;
  }
  if (auto pos = think.find(prompt::kSeverityPhrase); pos != std::string_view::npos) {
    auto l = label_token_after(think, pos + prompt::kSeverityPhrase.size(), true);
    if (l && *l != PdeCategory::kLow) return l;
  }
  if (auto pos = think.find(prompt::kOccurrencePhrase); pos != std::string_view::npos) {
    auto l = label_token_after(think, pos + prompt::kOccurrencePhrase.size(), true);
    if (l && *l == PdeCategory::kLow) {
      // "occurrence resolves to 0 or 1" is not a commitment.
      const auto tail = text::to_lower(think.substr(pos + prompt::kOccurrencePhrase.size(), 16));
      if (tail.find(" or ") == std::string::npos) return l;
    }
  }
  return std::nullopt;
}

int lra(const prompt::Trajectory& t, PdeCategory pred) {
  const auto phi = implied_label(t.think).value_or(t.answer);
  return phi == pred ? 1 : 0;
}

// ---------------------------------------------------------------------------
// Feature mentions

namespace {

struct Token {
  std::string text;  // lowercased
  std::size_t begin = 0;
};

std::vector<Token> tokenize(std::string_view s) {
  std::vector<Token> out;
  std::size_t i = 0;
  while (i < s.size()) {
    const auto c = static_cast<unsigned char>(s[i]);
    if (std::isalnum(c) != 0 || c == '_') {
      const auto b = i;
      while (i < s.size() && (std::isalnum(static_cast<unsigned char>(s[i])) != 0 || s[i] == '_')) ++i;
      out.push_back({text::to_lower(s.substr(b, i - b)), b});
    } else {
      ++i;
    }
  }
  return out;
}

struct AliasHit {
  std::string feature;
  std::size_t pos = 0;
  std::size_t length = 0;
};

std::vector<AliasHit> alias_hits(std::string_view text, const VariableDictionary& dictionary) {
  const auto lowered = text::to_lower(text);
  std::vector<AliasHit> hits;
  for (const auto& e : dictionary.entries()) {
    if (e.is_label) continue;
    std::vector<Alias> forms = e.aliases;
    forms.push_back({e.full_name, false});
    for (const auto& a : forms) {
      const auto positions = a.case_sensitive ? text::find_words(text, a.text)
                                              : text::find_words(lowered, text::to_lower(a.text));
      for (auto p : positions) hits.push_back({e.key, p, a.text.size()});
    }
  }
  return hits;
}

const std::map<std::string, Magnitude>& adjectives() {
  static const std::map<std::string, Magnitude> m = {
      {"high", Magnitude::kHigh},      {"elevated", Magnitude::kHigh}, {"raised", Magnitude::kHigh},
      {"deep", Magnitude::kHigh},      {"moderate", Magnitude::kMiddle}, {"low", Magnitude::kLow},
      {"shallow", Magnitude::kLow},
  };
  return m;
}

const std::set<std::string>& protective_words() {
  static const std::set<std::string> s = {"protective", "protection", "protects", "protect", "mitigates", "mitigating"};
  return s;
}

const std::set<std::string>& risk_words() {
  static const std::set<std::string> s = {"risk", "riskier", "exposure", "vulnerable", "vulnerability"};
  return s;
}

/// The direction a magnitude statement implies under the feature's prior.
std::optional<RiskDirection> implied_direction(RiskDirection prior, Magnitude m) {
  if (m == Magnitude::kMiddle || prior == RiskDirection::kNeutral) return std::nullopt;
  const bool high = m == Magnitude::kHigh;
  if (prior == RiskDirection::kHigherIsRiskier) {
    return high ? RiskDirection::kHigherIsRiskier : RiskDirection::kHigherIsProtective;
  }
  return high ? RiskDirection::kHigherIsProtective : RiskDirection::kHigherIsRiskier;
}

/// Adjective-qualified mentions, first per feature, sentence by sentence.
std::vector<DirectionalMention> directional_mentions(std::string_view think, const VariableDictionary& dictionary) {
  std::vector<DirectionalMention> out;
  std::set<std::string> seen;
  for (const auto& sentence : text::split_sentences(think)) {
    const auto tokens = tokenize(sentence);
    auto token_at = [&](std::size_t pos) {
      std::size_t i = 0;
      while (i < tokens.size() && tokens[i].begin < pos) ++i;
      return i;
    };
    auto hits = alias_hits(sentence, dictionary);
    std::sort(hits.begin(), hits.end(), [](const AliasHit& a, const AliasHit& b) {
      return a.pos != b.pos ? a.pos < b.pos : a.length > b.length;
    });
    for (const auto& h : hits) {
      if (seen.count(h.feature) != 0) continue;
      const auto first = token_at(h.pos);
      const auto last = std::max(first + 1, token_at(h.pos + h.length));  // one past the alias
      std::optional<std::pair<std::size_t, std::string>> best;
      const std::size_t lo = first >= 2 ? first - 2 : 0;
      const std::size_t hi = std::min(tokens.size(), last + 3);
      for (std::size_t i = lo; i < hi; ++i) {
        if (i >= first && i < last) continue;
        if (adjectives().count(tokens[i].text) == 0) continue;
        const std::size_t dist = i < first ? first - i : i - last + 1;
        if (!best || dist < best->first) best = std::make_pair(dist, tokens[i].text);
      }
      if (!best) continue;
      DirectionalMention m;
      m.feature = h.feature;
      m.adjective = best->second;
      m.stated = adjectives().at(best->second);
      for (std::size_t i = last; i < std::min(tokens.size(), last + 8); ++i) {
        if (protective_words().count(tokens[i].text) != 0) {
          m.stated_direction = RiskDirection::kHigherIsProtective;
          break;
        }
        if (risk_words().count(tokens[i].text) != 0) {
          m.stated_direction = RiskDirection::kHigherIsRiskier;
          break;
        }
      }
      seen.insert(h.feature);
      out.push_back(std::move(m));
    }
  }
  return out;
}

}  // namespace

std::set<std::string> mentioned_features(std::string_view text, const VariableDictionary& dictionary) {
  std::set<std::string> out;
  for (const auto& h : alias_hits(text, dictionary)) out.insert(h.feature);
  return out;
}

double sfc(std::string_view think, const std::set<std::string>& salient, const VariableDictionary& dictionary) {
  if (salient.empty()) throw std::invalid_argument("sfc: empty salient set");
  const auto mentioned = mentioned_features(think, dictionary);
  std::size_t hit = 0;
  for (const auto& f : salient) hit += mentioned.count(f);
  return static_cast<double>(hit) / static_cast<double>(salient.size());
}

Magnitude Terciles::classify(double v) const {
  if (v < lower) return Magnitude::kLow;
  if (v > upper) return Magnitude::kHigh;
  return Magnitude::kMiddle;
}

std::map<std::string, Terciles> compute_terciles(const std::vector<Record>& records,
                                                 const std::vector<std::string>& features) {
  std::map<std::string, Terciles> out;
  for (const auto& key : features) {
    std::vector<double> xs;
    for (const auto& r : records) {
      if (auto v = r.value(key)) xs.push_back(*v);
    }
    if (xs.empty()) continue;
    std::sort(xs.begin(), xs.end());
    auto q = [&](double p) {
      const double h = static_cast<double>(xs.size() - 1) * p;
      const auto lo = static_cast<std::size_t>(std::floor(h));
      const auto hi = static_cast<std::size_t>(std::ceil(h));
      return xs[lo] + (h - static_cast<double>(lo)) * (xs[hi] - xs[lo]);
    };
    out[key] = Terciles{q(1.0 / 3.0), q(2.0 / 3.0)};
  }
  return out;
}

FdcResult fdc(std::string_view think, const Record& record, const VariableDictionary& dictionary,
              const std::map<std::string, Terciles>& terciles) {
  FdcResult r;
  r.mentions = directional_mentions(think, dictionary);
  if (r.mentions.empty()) return r;
  std::size_t consistent = 0;
  for (auto& m : r.mentions) {
    bool magnitude_ok = false;
    const auto value = record.value(m.feature);
    if (auto t = terciles.find(m.feature); value && t != terciles.end()) {
      magnitude_ok = t->second.classify(*value) == m.stated;
    }
    bool direction_ok = false;
    if (m.stated_direction) {
      const auto expected = implied_direction(dictionary.at(m.feature).risk_direction, m.stated);
      direction_ok = expected && *expected == *m.stated_direction;
    }
    m.consistent = magnitude_ok || direction_ok;
    consistent += m.consistent ? 1 : 0;
  }
  r.score = static_cast<double>(consistent) / static_cast<double>(r.mentions.size());
  return r;
}

std::optional<double> pas(std::string_view think, PdeCategory pred, const kb::FreeShotLibrary& library,
                          const Record& record, const VariableDictionary& dictionary, std::size_t k, double epsilon) {
  auto protos = library.prototypes.find(pred);
  auto stats = library.stats.find(pred);
  if (protos == library.prototypes.end() || protos->second.empty() || stats == library.stats.end()) return std::nullopt;

  const kb::FreeShot* nearest = nullptr;
  double best = 0.0;
  for (const auto& p : protos->second) {
    double d = 0.0;
    for (const auto& [key, w] : library.cue_weights) {
      auto st = stats->second.per_feature.find(key);
      auto pv = p.features.find(key);
      auto xv = record.predictors.find(key);
      if (st == stats->second.per_feature.end() || pv == p.features.end() || xv == record.predictors.end()) continue;
      d += w * std::abs(xv->second - pv->second) / (st->second.sigma + epsilon);
    }
    if (nearest == nullptr || d < best || (d == best && p.row_id < nearest->row_id)) {
      nearest = &p;
      best = d;
    }
  }
  const auto top = kb::top_contributors(*nearest, k);
  if (top.empty()) return std::nullopt;
  const auto mentioned = mentioned_features(think, dictionary);
  std::size_t hit = 0;
  for (const auto& [key, c] : top) hit += mentioned.count(key);
  return static_cast<double>(hit) / static_cast<double>(top.size());
}

TradeoffCheck boundary_tradeoff(std::string_view think, const VariableDictionary& dictionary,
                                const downgrade::CueLexicon& lexicon) {
  TradeoffCheck t;
  const auto cues = downgrade::scan_cues(think, lexicon);
  t.risk_cue = !cues.severity.empty();
  t.protective_cue = !cues.light.empty();
  for (const auto& tok : tokenize(think)) {
    if (risk_words().count(tok.text) != 0) t.risk_cue = true;
    if (protective_words().count(tok.text) != 0) t.protective_cue = true;
  }
  for (const auto& m : directional_mentions(think, dictionary)) {
    const auto d = implied_direction(dictionary.at(m.feature).risk_direction, m.stated);
    if (d == RiskDirection::kHigherIsRiskier) t.risk_cue = true;
    if (d == RiskDirection::kHigherIsProtective) t.protective_cue = true;
  }
  const auto lowered = text::to_lower(think);
  for (std::string_view w : {"despite", "however", "although", "but", "offset"}) {
    if (!text::find_words(lowered, w).empty()) t.connective = true;
  }
  return t;
}

std::vector<std::size_t> boundary_subset(const std::vector<double>& boundary_distance, double quantile) {
  if (quantile < 0.0 || quantile > 1.0) throw std::invalid_argument("boundary_subset: quantile must lie in [0, 1]");
  std::vector<std::size_t> order(boundary_distance.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return boundary_distance[a] < boundary_distance[b]; });
  const auto n = static_cast<std::size_t>(std::ceil(quantile * static_cast<double>(order.size()) - 1e-12));
  order.resize(std::min(n, order.size()));
  std::sort(order.begin(), order.end());
  return order;
}

std::optional<double> bts(const std::vector<double>& boundary_distance, const std::vector<bool>& passes,
                          double quantile) {
  if (boundary_distance.size() != passes.size()) throw std::invalid_argument("bts: length mismatch");
  const auto subset = boundary_subset(boundary_distance, quantile);
  if (subset.empty()) return std::nullopt;
  std::size_t ok = 0;
  for (auto i : subset) ok += passes[i] ? 1 : 0;
  return static_cast<double>(ok) / static_cast<double>(subset.size());
}

double efficiency(double severity, double cost_idx) {
  if (!(cost_idx > 0.0)) throw std::invalid_argument("efficiency: cost must be positive");
  return severity / cost_idx;
}

// ---------------------------------------------------------------------------
// Reporting

namespace {

nlohmann::ordered_json opt(const std::optional<double>& v) {
  return v ? nlohmann::ordered_json(*v) : nlohmann::ordered_json(nullptr);
}

}  // namespace

nlohmann::ordered_json prediction_metrics_to_json(const PredictionMetrics& m) {
  nlohmann::ordered_json j;
  j["n"] = m.n;
  j["overall_accuracy"] = m.overall_accuracy;
  j["macro_f1"] = m.macro_f1;
  j["severity_score"] = m.severity_score;
  j["damage_class_accuracy"] = opt(m.damage_class_accuracy);
  j["recall_2"] = opt(m.recall_2);
  j["per_class_f1"] = m.per_class_f1;
  j["confusion"] = m.confusion;
  return j;
}

nlohmann::ordered_json reasoning_metrics_to_json(const ReasoningMetrics& m) {
  nlohmann::ordered_json j;
  j["lra"] = opt(m.lra);
  j["sfc"] = opt(m.sfc);
  j["fdc"] = opt(m.fdc);
  j["pas"] = opt(m.pas);
  j["bts"] = opt(m.bts);
  j["boundary_subset_size"] = m.boundary_subset_size;
  return j;
}

std::string format_metric(const std::optional<double>& v, int decimals) {
  return v ? text::fixed(*v, decimals) : std::string("-");
}

std::string format_table(const std::vector<std::string>& header, const std::vector<std::vector<std::string>>& rows) {
  std::vector<std::size_t> width(header.size());
  for (std::size_t c = 0; c < header.size(); ++c) width[c] = header[c].size();
  for (const auto& r : rows) {
    for (std::size_t c = 0; c < r.size() && c < width.size(); ++c) width[c] = std::max(width[c], r[c].size());
  }
  auto line = [&](const std::vector<std::string>& cells) {
    std::string s;
    for (std::size_t c = 0; c < width.size(); ++c) {
      const std::string cell = c < cells.size() ? cells[c] : "";
      if (c == 0) {
        s += cell + std::string(width[c] - cell.size(), ' ');
      } else {
        s += "  " + std::string(width[c] - cell.size(), ' ') + cell;
      }
    }
    while (!s.empty() && s.back() == ' ') s.pop_back();
    return s + "\n";
  };
  std::string out = line(header);
  std::size_t total = 0;
  for (auto w : width) total += w;
  out += std::string(total + 2 * (width.size() - 1), '-') + "\n";
  for (const auto& r : rows) out += line(r);
  return out;
}

std::string_view ablation_name(AblationConfig c) {
  switch (c) {
    case AblationConfig::kI: return "I";
    case AblationConfig::kII: return "II";
    case AblationConfig::kIII: return "III";
    case AblationConfig::kIV: return "IV";
  }
  return "?";
}

AblationConfig ablation_from_name(std::string_view s) {
  for (auto c : kAllAblations) {
    if (ablation_name(c) == s) return c;
  }
  throw std::invalid_argument("unknown ablation config: " + std::string(s));
}

bool uses_neighbors(AblationConfig c) { return c != AblationConfig::kI; }
bool uses_free_shots(AblationConfig c) { return c == AblationConfig::kIII || c == AblationConfig::kIV; }
bool uses_post_check(AblationConfig c) { return c == AblationConfig::kIV; }

}  // namespace floodrag::eval
