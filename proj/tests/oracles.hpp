// Copyright (c) 2026 The unspeech-cpp Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//   http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.


// Brute-force reference implementations used to check the library.

#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <numeric>
#include <random>
#include <set>
#include <vector>

#include "test_util.hpp"

namespace unspeech::oracle {

/// Threshold sweep: every distinct score (and +inf) is tried as an accept
/// threshold, rates are counted directly, and the FNR/FPR crossing is
/// interpolated linearly between the two thresholds that bracket it.
inline double eer(const std::vector<ScoredTrial>& trials) {
  std::set<double, std::greater<>> thresholds{std::numeric_limits<double>::infinity()};
  for (const auto& t : trials) thresholds.insert(t.score);
  double same = 0, diff = 0;
  for (const auto& t : trials) (t.is_same ? same : diff) += 1;
  double prev_fpr = 0, prev_fnr = 1;
  for (double th : thresholds) {
    double fa = 0, miss = 0;
    for (const auto& t : trials) {
      const bool accept = t.score >= th;
      if (accept && !t.is_same) fa += 1;
      if (!accept && t.is_same) miss += 1;
    }
    const double fpr = fa / diff, fnr = miss / same;
    if (fnr <= fpr) {
      const double d0 = prev_fnr - prev_fpr, d1 = fnr - fpr;
      const double w = d0 / (d0 - d1);
      return prev_fpr + w * (fpr - prev_fpr);
    }
    prev_fpr = fpr;
    prev_fnr = fnr;
  }
  return prev_fpr;
}

/// Pair-counting form of the adjusted Rand index.
inline double ari(const std::vector<int>& a, const std::vector<int>& b) {
  double n11 = 0, n10 = 0, n01 = 0, n00 = 0;
  for (std::size_t i = 0; i < a.size(); ++i)
    for (std::size_t j = i + 1; j < a.size(); ++j) {
      const bool sa = a[i] == a[j], sb = b[i] == b[j];
      (sa ? (sb ? n11 : n10) : (sb ? n01 : n00)) += 1;
    }
  const double den = (n00 + n01) * (n01 + n11) + (n00 + n10) * (n10 + n11);
  if (den == 0) return 1.0;
  return 2.0 * (n00 * n11 - n01 * n10) / den;
}

/// Mutual information from an explicitly enumerated joint distribution.
inline double nmi(const std::vector<int>& a, const std::vector<int>& b) {
  const std::set<int> la(a.begin(), a.end()), lb(b.begin(), b.end());
  const double n = static_cast<double>(a.size());
  auto count = [&](auto pred) {
    double c = 0;
    for (std::size_t i = 0; i < a.size(); ++i) c += pred(i);
    return c;
  };
  double ha = 0, hb = 0, mi = 0;
  for (int x : la) {
    const double p = count([&](std::size_t i) { return a[i] == x; }) / n;
    ha -= p * std::log(p);
  }
  for (int y : lb) {
    const double p = count([&](std::size_t i) { return b[i] == y; }) / n;
    hb -= p * std::log(p);
  }
  if (la.size() == 1 && lb.size() == 1) return 1.0;
  if (la.size() == 1 || lb.size() == 1) return 0.0;
  for (int x : la)
    for (int y : lb) {
      const double pxy = count([&](std::size_t i) { return a[i] == x && b[i] == y; }) / n;
      if (pxy == 0) continue;
      const double px = count([&](std::size_t i) { return a[i] == x; }) / n;
      const double py = count([&](std::size_t i) { return b[i] == y; }) / n;
      mi += pxy * std::log(pxy / (px * py));
    }
  return mi / std::sqrt(ha * hb);
}

/// Kruskal over the complete mutual-reachability graph. The core distance
/// counts the point itself as its own nearest neighbour.
inline double mst_weight(const std::vector<std::vector<double>>& pts, std::size_t min_samples) {
  const std::size_t n = pts.size();
  auto dist = [&](std::size_t i, std::size_t j) {
    double s = 0;
    for (std::size_t d = 0; d < pts[i].size(); ++d) s += (pts[i][d] - pts[j][d]) * (pts[i][d] - pts[j][d]);
    return std::sqrt(s);
  };
  std::vector<double> core(n);
  for (std::size_t i = 0; i < n; ++i) {
    std::vector<double> row;
    for (std::size_t j = 0; j < n; ++j) row.push_back(dist(i, j));
    std::sort(row.begin(), row.end());
    core[i] = row[std::min(min_samples, n) - 1];
  }
  struct E {
    double w;
    std::size_t a, b;
  };
  std::vector<E> edges;
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = i + 1; j < n; ++j) edges.push_back({std::max({core[i], core[j], dist(i, j)}), i, j});
  std::sort(edges.begin(), edges.end(), [](const E& x, const E& y) { return x.w < y.w; });
  std::vector<std::size_t> parent(n);
  std::iota(parent.begin(), parent.end(), 0);
  auto find = [&](std::size_t x) {
    while (parent[x] != x) x = parent[x] = parent[parent[x]];
    return x;
  };
  double total = 0;
  for (const auto& e : edges) {
    const auto ra = find(e.a), rb = find(e.b);
    if (ra == rb) continue;
    parent[ra] = rb;
    total += e.w;
  }
  return total;
}

/// True when `a` and `b` are the same partition up to relabeling.
inline bool same_partition(const std::vector<int>& a, const std::vector<int>& b) {
  if (a.size() != b.size()) return false;
  std::map<int, int> ab, ba;
  for (std::size_t i = 0; i < a.size(); ++i) {
    if (ab.emplace(a[i], b[i]).first->second != b[i]) return false;
    if (ba.emplace(b[i], a[i]).first->second != a[i]) return false;
  }
  return true;
}

/// Max relative error of the analytic gradient against central differences
/// (step h) over every parameter, on a seeded random batch of two groups.
inline double gradient_check(const ArchitectureConfig& arch, std::uint64_t seed, double l2 = 1e-2, double h = 1e-5) {
  SiameseModel<double> model(arch, seed);
  Rng rng = derive_rng(seed, {99});
  std::normal_distribution<double> nd;
  model.set_alpha(0.8 + 0.5 * std::uniform_real_distribution<double>(0, 1)(rng));
  // Perturb biases away from zero so they are exercised too.
  for (auto& t : model.params().tensors)
    if (!t.decay && t.name != "alpha")
      for (auto& v : t.data) v = 0.1 * nd(rng);

  std::vector<FeatureMatrix> windows;
  for (int i = 0; i < 9; ++i)
    windows.push_back(testing::random_features("w" + std::to_string(i), arch.input_width, arch.input_bins, rng));
  auto w = [&](int i) { return slice_window(windows[i], 0, arch.input_width); };
  std::vector<ViewGroup> groups(2);
  groups[0] = {w(0), {w(1), w(2)}, {{w(3), w(4)}, {w(5), w(6)}}};
  groups[1] = {w(7), {w(8), w(0)}, {{w(1), w(5)}, {w(2), w(3)}}};

  ObjectiveOptions opts;
  opts.l2_lambda = l2;
  opts.mode = arch.dropout_p > 0 ? Mode::kTrain : Mode::kEval;
  opts.dropout_rng = [seed](std::size_t g) { return derive_rng(seed, {7, g}); };
  const std::size_t k = 2;

  ParamSet<double> grads;
  evaluate_batch(model, groups, k, opts, &grads);
  double worst = 0;
  for (std::size_t t = 0; t < model.params().tensors.size(); ++t)
    for (std::size_t j = 0; j < model.params().tensors[t].size(); ++j) {
      double& p = model.params().tensors[t].data[j];
      const double keep = p;
      p = keep + h;
      const double up = evaluate_batch(model, groups, k, opts).objective;
      p = keep - h;
      const double down = evaluate_batch(model, groups, k, opts).objective;
      p = keep;
      const double numeric = (up - down) / (2 * h);
      const double analytic = grads.tensors[t].data[j];
      const double rel = std::abs(numeric - analytic) / std::max({std::abs(numeric), std::abs(analytic), 1e-6});
      worst = std::max(worst, rel);
    }
  return worst;
}

/// The three seeded architectures used for gradient checks.
inline std::vector<ArchitectureConfig> gradient_check_archs() {
  std::vector<ArchitectureConfig> out;
  out.push_back(testing::tiny_arch(8, 8));

  ArchitectureConfig b;
  b.input_width = 8;
  b.input_bins = 12;
  b.conv_stages = {{1, 2}, {2, 3}};
  b.fc_widths = {5, 4, 3};
  b.dropout_p = 0.0;
  out.push_back(b);

  ArchitectureConfig c;
  c.input_width = 12;
  c.input_bins = 8;
  c.conv_stages = {{2, 2}};
  c.fc_widths = {3};
  c.leaky_relu_slope = 0.1;
  c.dropout_p = 0.3;
  out.push_back(c);
  return out;
}

}  // namespace unspeech::oracle
