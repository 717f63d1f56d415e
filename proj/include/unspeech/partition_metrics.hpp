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


#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include "unspeech/common.hpp"

namespace unspeech {

/// Label of a point assigned to no cluster.
inline constexpr int kOutlier = -1;

namespace detail {

struct Contingency {
  std::map<std::pair<int, int>, std::size_t> cells;
  std::map<int, std::size_t> rows, cols;
  std::size_t n = 0;
};

inline Contingency contingency(const std::vector<int>& a, const std::vector<int>& b) {
  if (a.size() != b.size())
    throw InvalidArgument("label vectors differ in length (" + std::to_string(a.size()) + " vs " +
                          std::to_string(b.size()) + ")");
  Contingency c;
  c.n = a.size();
  for (std::size_t i = 0; i < a.size(); ++i) {
    ++c.cells[{a[i], b[i]}];
    ++c.rows[a[i]];
    ++c.cols[b[i]];
  }
  return c;
}

inline double choose2(std::size_t n) { return 0.5 * static_cast<double>(n) * (static_cast<double>(n) - 1.0); }

}  // namespace detail

/// Hubert-Arabie adjusted Rand index. Two partitions that are both trivial
/// in the same way (e.g. one cluster each) score 1.
inline double adjusted_rand_index(const std::vector<int>& a, const std::vector<int>& b) {
  const auto c = detail::contingency(a, b);
  if (c.n < 2) throw InvalidArgument("adjusted_rand_index: need at least 2 items");
  double index = 0.0, sum_a = 0.0, sum_b = 0.0;
  for (const auto& [k, v] : c.cells) index += detail::choose2(v);
  for (const auto& [k, v] : c.rows) sum_a += detail::choose2(v);
  for (const auto& [k, v] : c.cols) sum_b += detail::choose2(v);
  const double expected = sum_a * sum_b / detail::choose2(c.n);
  const double max_index = 0.5 * (sum_a + sum_b);
  if (max_index == expected) return 1.0;
  return (index - expected) / (max_index - expected);
}

/// I(A;B) / sqrt(H(A) H(B)) with natural logarithms.
inline double normalized_mutual_information(const std::vector<int>& a, const std::vector<int>& b) {
  const auto c = detail::contingency(a, b);
  if (c.n == 0) throw InvalidArgument("normalized_mutual_information: empty labelings");
  const double n = static_cast<double>(c.n);
  auto entropy = [n](const std::map<int, std::size_t>& counts) {
    double h = 0.0;
    for (const auto& [k, v] : counts) {
      const double p = static_cast<double>(v) / n;
      h -= p * std::log(p);
    }
    return h;
  };
  const double ha = entropy(c.rows), hb = entropy(c.cols);
  // Singleton label sets give exactly zero entropy; compare with a tolerance
  // to absorb rounding in the sums above.
  const bool za = ha <= 1e-15, zb = hb <= 1e-15;
  if (za && zb) return 1.0;
  if (za || zb) return 0.0;
  double mi = 0.0;
  for (const auto& [k, v] : c.cells) {
    const double pij = static_cast<double>(v) / n;
    const double pi = static_cast<double>(c.rows.at(k.first)) / n;
    const double pj = static_cast<double>(c.cols.at(k.second)) / n;
    mi += pij * std::log(pij / (pi * pj));
  }
  return std::clamp(mi / std::sqrt(ha * hb), 0.0, 1.0);
}

enum class OutlierPolicy {
  kSingletons,  // every outlier becomes its own cluster
  kExclude,     // outliers are dropped from both labelings
};

/// Applies `policy` to predicted labels (where kOutlier marks noise) and the
/// matching reference labels.
inline std::pair<std::vector<int>, std::vector<int>> apply_outlier_policy(const std::vector<int>& predicted,
                                                                          const std::vector<int>& reference,
                                                                          OutlierPolicy policy) {
  if (predicted.size() != reference.size()) throw InvalidArgument("label vectors differ in length");
  std::pair<std::vector<int>, std::vector<int>> out;
  int next = 0;
  for (int l : predicted) next = std::max(next, l + 1);
  for (std::size_t i = 0; i < predicted.size(); ++i) {
    if (predicted[i] == kOutlier) {
      if (policy == OutlierPolicy::kExclude) continue;
      out.first.push_back(next++);
    } else {
      out.first.push_back(predicted[i]);
    }
    out.second.push_back(reference[i]);
  }
  return out;
}

/// Maps string labels to dense ids in order of first appearance.
inline std::vector<int> encode_labels(const std::vector<std::string>& labels) {
  std::map<std::string, int> ids;
  std::vector<int> out;
  out.reserve(labels.size());
  for (const auto& l : labels) out.push_back(ids.emplace(l, static_cast<int>(ids.size())).first->second);
  return out;
}

}  // namespace unspeech
