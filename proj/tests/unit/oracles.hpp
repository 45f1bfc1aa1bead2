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

// Brute-force reference implementations used as test oracles. They favor
// directness over speed and share no code with the library.

#pragma once

#include <algorithm>
#include <cmath>
#include <random>
#include <vector>

#include "test_support.hpp"

namespace floodrag::testing {

/// 1..12 values drawn from a small integer support, sometimes shifted.
inline std::vector<double> random_discrete_sample(std::mt19937_64& rng) {
  const std::size_t n = 1 + rng() % 12;
  const int support = 1 + static_cast<int>(rng() % 6);
  const int shift = static_cast<int>(rng() % 3);
  std::vector<double> out;
  for (std::size_t i = 0; i < n; ++i) out.push_back(static_cast<double>(shift + static_cast<int>(rng() % support)));
  return out;
}

/// max over all sample points of |F_a(t) - F_b(t)|, each ECDF counted directly.
inline double ks_oracle(const std::vector<double>& a, const std::vector<double>& b) {
  auto ecdf = [](const std::vector<double>& s, double t) {
    std::size_t c = 0;
    for (double v : s) c += v <= t ? 1 : 0;
    return static_cast<double>(c) / static_cast<double>(s.size());
  };
  double best = 0.0;
  for (const auto* s : {&a, &b}) {
    for (double t : *s) best = std::max(best, std::abs(ecdf(a, t) - ecdf(b, t)));
  }
  return best;
}

/// Equal-width histograms over the pooled range, then the two KL sums in
/// base 2 term by term.
inline double js_oracle(const std::vector<double>& a, const std::vector<double>& b, int bins) {
  double lo = a[0], hi = a[0];
  for (const auto* s : {&a, &b}) {
    for (double v : *s) {
      lo = std::min(lo, v);
      hi = std::max(hi, v);
    }
  }
  if (hi == lo) return 0.0;
  auto hist = [&](const std::vector<double>& s) {
    std::vector<double> h(static_cast<std::size_t>(bins), 0.0);
    const double width = (hi - lo) / bins;
    for (double v : s) {
      long long k = static_cast<long long>(std::floor((v - lo) / width));
      if (k >= bins) k = bins - 1;
      if (k < 0) k = 0;
      h[static_cast<std::size_t>(k)] += 1.0 / static_cast<double>(s.size());
    }
    return h;
  };
  const auto p = hist(a), q = hist(b);
  double kl_p = 0.0, kl_q = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) {
    const double m = 0.5 * (p[i] + q[i]);
    if (p[i] > 0) kl_p += p[i] * std::log2(p[i] / m);
    if (q[i] > 0) kl_q += q[i] * std::log2(q[i] / m);
  }
  return 0.5 * kl_p + 0.5 * kl_q;
}

}  // namespace floodrag::testing
