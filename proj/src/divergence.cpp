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

#include "floodrag/divergence.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>
#include <stdexcept>

#include "floodrag/text_util.hpp"

namespace floodrag::divergence {

std::string_view boundary_name(Boundary b) { return b == Boundary::kOccurrence ? "occurrence" : "severity"; }

namespace {

Boundary boundary_from_name(std::string_view s) {
  if (s == "occurrence") return Boundary::kOccurrence;
  if (s == "severity") return Boundary::kSeverity;
  throw Error("unknown boundary: " + std::string(s));
}

}  // namespace

BoundarySpec BoundarySpec::occurrence() {
  return {Boundary::kOccurrence, {PdeCategory::kLow}, {PdeCategory::kMedium, PdeCategory::kHigh}};
}

BoundarySpec BoundarySpec::severity() {
  return {Boundary::kSeverity, {PdeCategory::kMedium}, {PdeCategory::kHigh}};
}

double ks_statistic(std::span<const double> samples_a, std::span<const double> samples_b) {
  if (samples_a.empty() || samples_b.empty()) throw std::invalid_argument("ks_statistic: empty sample");
  std::vector<double> a(samples_a.begin(), samples_a.end());
  std::vector<double> b(samples_b.begin(), samples_b.end());
  std::sort(a.begin(), a.end());
  std::sort(b.begin(), b.end());
  const double na = static_cast<double>(a.size());
  const double nb = static_cast<double>(b.size());
  std::size_t i = 0;
  std::size_t j = 0;
  double best = 0.0;
  while (i < a.size() || j < b.size()) {
    // Advance past every copy of the next breakpoint in both samples.
    double v;
    if (j >= b.size() || (i < a.size() && a[i] <= b[j])) {
      v = a[i];
    } else {
      v = b[j];
    }
    while (i < a.size() && a[i] <= v) ++i;
    while (j < b.size() && b[j] <= v) ++j;
    best = std::max(best, std::fabs(static_cast<double>(i) / na - static_cast<double>(j) / nb));
  }
  return best;
}

double js_from_distributions(std::span<const double> p, std::span<const double> q, double log_base) {
  if (p.size() != q.size() || p.empty()) throw std::invalid_argument("js: distributions must have equal, nonzero length");
  if (!(log_base > 0.0) || log_base == 1.0) throw std::invalid_argument("js: invalid log base");
  double sp = 0.0;
  double sq = 0.0;
  for (std::size_t k = 0; k < p.size(); ++k) {
    if (p[k] < 0.0 || q[k] < 0.0) throw std::invalid_argument("js: negative probability");
    sp += p[k];
    sq += q[k];
  }
  if (sp <= 0.0 || sq <= 0.0) throw std::invalid_argument("js: zero-mass distribution");
  const double ln_base = std::log(log_base);
  double kl_p = 0.0;
  double kl_q = 0.0;
  for (std::size_t k = 0; k < p.size(); ++k) {
    const double pk = p[k] / sp;
    const double qk = q[k] / sq;
    const double mk = 0.5 * (pk + qk);
    if (pk > 0.0) kl_p += pk * std::log(pk / mk);
    if (qk > 0.0) kl_q += qk * std::log(qk / mk);
  }
  const double js = (0.5 * kl_p + 0.5 * kl_q) / ln_base;
  return std::max(0.0, js);
}

double js_divergence(std::span<const double> samples_a, std::span<const double> samples_b, int bins, double log_base) {
  if (samples_a.empty() || samples_b.empty()) throw std::invalid_argument("js_divergence: empty sample");
  if (bins < 2) throw std::invalid_argument("js_divergence: bins must be >= 2");
  double lo = samples_a.front();
  double hi = lo;
  for (auto s : {samples_a, samples_b}) {
    for (double v : s) {
      lo = std::min(lo, v);
      hi = std::max(hi, v);
    }
  }
  if (hi == lo) return 0.0;
  const double width = (hi - lo) / static_cast<double>(bins);
  auto histogram = [&](std::span<const double> s) {
    std::vector<double> h(static_cast<std::size_t>(bins), 0.0);
    for (double v : s) {
      auto k = static_cast<long long>(std::floor((v - lo) / width));
      k = std::clamp<long long>(k, 0, bins - 1);
      h[static_cast<std::size_t>(k)] += 1.0;
    }
    return h;
  };
  const auto ha = histogram(samples_a);
  const auto hb = histogram(samples_b);
  return js_from_distributions(ha, hb, log_base);
}

double composite_score(double js, double ks, double w_js, double w_ks) {
  if (!(w_js > 0.0 && w_js <= 1.0) || !(w_ks > 0.0 && w_ks <= 1.0)) {
    throw std::invalid_argument("composite_score: weights must lie in (0, 1]");
  }
  return w_js * js + w_ks * ks;
}

const FeatureDivergence* DivergenceProfile::find(Boundary b, const std::string& feature) const {
  auto it = per_boundary.find(b);
  if (it == per_boundary.end()) return nullptr;
  for (const auto& f : it->second) {
    if (f.feature == feature) return &f;
  }
  return nullptr;
}

namespace {

void sort_by_score(std::vector<FeatureDivergence>& v) {
  std::stable_sort(v.begin(), v.end(), [](const FeatureDivergence& l, const FeatureDivergence& r) {
    if (l.score != r.score) return l.score > r.score;
    return l.feature < r.feature;
  });
}

}  // namespace

DivergenceProfile build_profile(const std::vector<Record>& records, const std::vector<std::string>& features,
                                const DivergenceConfig& config) {
  // Validates the weights up front.
  (void)composite_score(0.0, 0.0, config.w_js, config.w_ks);
  if (config.bins < 2) throw std::invalid_argument("build_profile: bins must be >= 2");
  if (config.salient_k < 1) throw std::invalid_argument("build_profile: salient_k must be >= 1");

  std::vector<const Record*> labeled;
  for (const auto& r : records) {
    if (r.label) labeled.push_back(&r);
  }
  if (labeled.empty()) throw Error("build_profile: no labeled records");

  DivergenceProfile profile;
  profile.w_js = config.w_js;
  profile.w_ks = config.w_ks;

  for (const auto& spec : {BoundarySpec::occurrence(), BoundarySpec::severity()}) {
    std::size_t count_a = 0;
    std::size_t count_b = 0;
    for (const auto* r : labeled) {
      count_a += spec.group_a.count(*r->label);
      count_b += spec.group_b.count(*r->label);
    }
    if (count_a == 0 || count_b == 0) {
      throw Error("build_profile: empty group at the " + std::string(boundary_name(spec.name)) + " boundary");
    }

    std::vector<FeatureDivergence> scored;
    for (const auto& feature : features) {
      std::vector<double> a;
      std::vector<double> b;
      for (const auto* r : labeled) {
        auto v = r->value(feature);
        if (!v) continue;
        if (spec.group_a.count(*r->label) != 0) a.push_back(*v);
        if (spec.group_b.count(*r->label) != 0) b.push_back(*v);
      }
      FeatureDivergence fd;
      fd.feature = feature;
      fd.n_a = a.size();
      fd.n_b = b.size();
      if (a.empty() || b.empty()) {
        fd.insufficient = true;
      } else {
        fd.ks = ks_statistic(a, b);
        fd.js = js_divergence(a, b, config.bins, config.log_base);
        // A pooled constant has no separation; ks is already 0 there.
      }
      fd.score = composite_score(fd.js, fd.ks, config.w_js, config.w_ks);
      scored.push_back(std::move(fd));
    }
    sort_by_score(scored);

    std::vector<std::string> order;
    order.reserve(scored.size());
    for (const auto& fd : scored) order.push_back(fd.feature);
    const auto k = std::min<std::size_t>(static_cast<std::size_t>(config.salient_k), scored.size());
    for (std::size_t i = 0; i < k; ++i) {
      profile.salient_set.insert(scored[i].feature);
      profile.cue_weights[scored[i].feature] += scored[i].score;
    }
    profile.ordered_features[spec.name] = std::move(order);
    profile.per_boundary[spec.name] = std::move(scored);
  }

  double total = 0.0;
  for (const auto& [_, w] : profile.cue_weights) total += w;
  for (auto& [_, w] : profile.cue_weights) {
    w = total > 0.0 ? w / total : 1.0 / static_cast<double>(profile.cue_weights.size());
  }
  return profile;
}

nlohmann::ordered_json profile_to_json(const DivergenceProfile& profile) {
  nlohmann::ordered_json j;
  j["w_js"] = profile.w_js;
  j["w_ks"] = profile.w_ks;
  nlohmann::ordered_json boundaries = nlohmann::ordered_json::object();
  for (const auto& [b, list] : profile.per_boundary) {
    nlohmann::ordered_json arr = nlohmann::ordered_json::array();
    for (const auto& f : list) {
      arr.push_back({{"feature", f.feature},
                     {"score", f.score},
                     {"js", f.js},
                     {"ks", f.ks},
                     {"n_a", f.n_a},
                     {"n_b", f.n_b},
                     {"insufficient", f.insufficient}});
    }
    boundaries[std::string(boundary_name(b))] = std::move(arr);
  }
  j["boundaries"] = std::move(boundaries);
  nlohmann::ordered_json ordered = nlohmann::ordered_json::object();
  for (const auto& [b, list] : profile.ordered_features) ordered[std::string(boundary_name(b))] = list;
  j["ordered_features"] = std::move(ordered);
  j["salient_set"] = std::vector<std::string>(profile.salient_set.begin(), profile.salient_set.end());
  nlohmann::ordered_json weights = nlohmann::ordered_json::object();
  for (const auto& [k, w] : profile.cue_weights) weights[k] = w;
  j["cue_weights"] = std::move(weights);
  return j;
}

DivergenceProfile profile_from_json(const nlohmann::json& j) {
  DivergenceProfile p;
  try {
    p.w_js = j.at("w_js").get<double>();
    p.w_ks = j.at("w_ks").get<double>();
    for (auto it = j.at("boundaries").begin(); it != j.at("boundaries").end(); ++it) {
      std::vector<FeatureDivergence> list;
      for (const auto& f : it.value()) {
        FeatureDivergence fd;
        fd.feature = f.at("feature").get<std::string>();
        fd.score = f.at("score").get<double>();
        fd.js = f.at("js").get<double>();
        fd.ks = f.at("ks").get<double>();
        fd.n_a = f.at("n_a").get<std::size_t>();
        fd.n_b = f.at("n_b").get<std::size_t>();
        fd.insufficient = f.value("insufficient", false);
        list.push_back(std::move(fd));
      }
      p.per_boundary[boundary_from_name(it.key())] = std::move(list);
    }
    for (auto it = j.at("ordered_features").begin(); it != j.at("ordered_features").end(); ++it) {
      p.ordered_features[boundary_from_name(it.key())] = it.value().get<std::vector<std::string>>();
    }
    for (const auto& s : j.at("salient_set")) p.salient_set.insert(s.get<std::string>());
    for (auto it = j.at("cue_weights").begin(); it != j.at("cue_weights").end(); ++it) {
      p.cue_weights[it.key()] = it.value().get<double>();
    }
  } catch (const nlohmann::json::exception& e) {
    throw Error(std::string("malformed profile: ") + e.what());
  }
  return p;
}

std::string profile_report(const DivergenceProfile& profile, const VariableDictionary& dictionary) {
  const auto occ_it = profile.ordered_features.find(Boundary::kOccurrence);
  if (occ_it == profile.ordered_features.end()) return {};

  std::vector<std::vector<std::string>> rows;
  rows.push_back({"Feature", "Score(0|1+2)", "Score(1|2)", "JS(0|1+2)", "KS(0|1+2)", "JS(1|2)", "KS(1|2)"});
  for (const auto& feature : occ_it->second) {
    const auto* occ = profile.find(Boundary::kOccurrence, feature);
    const auto* sev = profile.find(Boundary::kSeverity, feature);
    const auto* entry = dictionary.find(feature);
    std::vector<std::string> row{entry != nullptr ? entry->full_name : feature};
    row.push_back(occ != nullptr ? text::fixed(occ->score, 4) : "-");
    row.push_back(sev != nullptr ? text::fixed(sev->score, 4) : "-");
    row.push_back(occ != nullptr ? text::fixed(occ->js, 3) : "-");
    row.push_back(occ != nullptr ? text::fixed(occ->ks, 3) : "-");
    row.push_back(sev != nullptr ? text::fixed(sev->js, 3) : "-");
    row.push_back(sev != nullptr ? text::fixed(sev->ks, 3) : "-");
    rows.push_back(std::move(row));
  }
  std::vector<std::size_t> widths(rows.front().size(), 0);
  for (const auto& r : rows) {
    for (std::size_t c = 0; c < r.size(); ++c) widths[c] = std::max(widths[c], r[c].size());
  }
  std::ostringstream out;
  for (const auto& r : rows) {
    for (std::size_t c = 0; c < r.size(); ++c) {
      if (c == 0) {
        out << r[c] << std::string(widths[c] - r[c].size(), ' ');
      } else {
        out << "  " << std::string(widths[c] - r[c].size(), ' ') << r[c];
      }
    }
    out << '\n';
  }
  return out.str();
}

}  // namespace floodrag::divergence
