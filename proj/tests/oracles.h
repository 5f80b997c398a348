// Copyright 2026 The srctrace Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     https://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#ifndef SRCTRACE_TESTS_ORACLES_H_
#define SRCTRACE_TESTS_ORACLES_H_

// Slow reference implementations used to cross-check the library. They share
// no code with it.

#include <algorithm>
#include <cmath>
#include <set>
#include <vector>

#include "srctrace/linalg.h"

namespace srctrace::oracle {

// Exhaustive threshold sweep. Every threshold is a distinct score (accept
// score >= t) plus +inf; rates are recounted from scratch at each one.
// Returns the rate where the FRR and FAR curves meet, interpolating linearly
// between the last point with FRR < FAR and the first with FRR >= FAR.
inline double eer_sweep(const std::vector<double>& scores, const std::vector<bool>& is_target) {
  std::set<double> distinct(scores.begin(), scores.end());
  std::vector<double> thresholds(distinct.begin(), distinct.end());
  thresholds.push_back(INFINITY);
  double nt = 0, nn = 0;
  for (bool t : is_target) (t ? nt : nn) += 1;
  double prev_frr = 0.0, prev_far = 1.0;
  for (double th : thresholds) {
    double fr = 0, fa = 0;
    for (std::size_t i = 0; i < scores.size(); ++i) {
      const bool accept = scores[i] >= th;
      if (is_target[i] && !accept) fr += 1;
      if (!is_target[i] && accept) fa += 1;
    }
    const double frr = fr / nt, far = fa / nn;
    if (frr >= far) {
      if (frr == far) return frr;
      // Intersection of the segments (prev_frr -> frr) and (prev_far -> far).
      const double a = (prev_far - prev_frr) / ((prev_far - prev_frr) - (far - frr));
      return prev_frr + a * (frr - prev_frr);
    }
    prev_frr = frr;
    prev_far = far;
  }
  return 0.5;
}

// Equal-width binning by direct edge comparison: bin m holds (m/M, (m+1)/M],
// and confidence 0 joins the first bin.
inline double ece_binning(const std::vector<double>& confidence, const std::vector<bool>& correct,
                          std::size_t m_bins) {
  const double n = static_cast<double>(confidence.size());
  double total = 0.0;
  for (std::size_t m = 0; m < m_bins; ++m) {
    const double lo = static_cast<double>(m) / static_cast<double>(m_bins);
    const double hi = static_cast<double>(m + 1) / static_cast<double>(m_bins);
    double count = 0, hits = 0, conf = 0;
    for (std::size_t i = 0; i < confidence.size(); ++i) {
      const double c = confidence[i];
      const bool in = (c > lo && c <= hi) || (m == 0 && c <= 0.0) || (m + 1 == m_bins && c > 1.0);
      if (!in) continue;
      count += 1;
      hits += correct[i] ? 1 : 0;
      conf += c;
    }
    if (count > 0) total += count / n * std::abs(hits / count - conf / count);
  }
  return total;
}

// Closed-form Frechet distance for diagonal covariances.
inline double frechet_diagonal(const std::vector<double>& mu_a, const std::vector<double>& var_a,
                               const std::vector<double>& mu_b, const std::vector<double>& var_b) {
  double total = 0.0;
  for (std::size_t d = 0; d < mu_a.size(); ++d) {
    const double dm = mu_a[d] - mu_b[d];
    const double ds = std::sqrt(var_a[d]) - std::sqrt(var_b[d]);
    total += dm * dm + ds * ds;
  }
  return total;
}

}  // namespace srctrace::oracle

#endif  // SRCTRACE_TESTS_ORACLES_H_
