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
#include <functional>
#include <limits>
#include <set>
#include <string>
#include <vector>

#include "unspeech/common.hpp"
#include "unspeech/inference.hpp"
#include "unspeech/loss.hpp"

namespace unspeech {

struct ScoredTrial {
  double score = 0.0;  // higher means more likely the same speaker
  bool is_same = false;
};

/// All unordered pairs i < j, scored by `score(i, j)`.
inline std::vector<ScoredTrial> pairwise_trials(std::size_t n, const std::vector<std::string>& speakers,
                                                const std::function<double(std::size_t, std::size_t)>& score) {
  if (speakers.size() != n)
    throw InvalidArgument("pairwise_trials: " + std::to_string(n) + " items but " + std::to_string(speakers.size()) +
                          " speaker labels");
  if (std::set<std::string>(speakers.begin(), speakers.end()).size() < 2)
    throw InvalidArgument("pairwise_trials: need at least two speakers");
  std::vector<ScoredTrial> trials;
  trials.reserve(n * (n - 1) / 2);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = i + 1; j < n; ++j) {
      const double s = score(i, j);
      if (!std::isfinite(s)) throw InvalidArgument("pairwise_trials: non-finite score");
      trials.push_back({s, speakers[i] == speakers[j]});
    }
  return trials;
}

/// Trials scored by -d2 on the embeddings.
inline std::vector<ScoredTrial> d2_trials(const std::vector<std::vector<float>>& embeddings,
                                          const std::vector<std::string>& speakers, bool normalize = true) {
  return pairwise_trials(embeddings.size(), speakers, [&](std::size_t i, std::size_t j) {
    return -static_cast<double>(distance_d2<float>(embeddings[i], embeddings[j], normalize));
  });
}

/// Trials scored by d1 on utterance-level target/context embeddings,
/// averaged over both orderings.
inline std::vector<ScoredTrial> d1_trials(const std::vector<std::vector<float>>& target,
                                          const std::vector<std::vector<float>>& context, float alpha,
                                          const std::vector<std::string>& speakers) {
  if (target.size() != context.size()) throw InvalidArgument("d1_trials: target/context counts differ");
  return pairwise_trials(target.size(), speakers, [&](std::size_t i, std::size_t j) {
    const double ab = sigmoid(static_cast<double>(score<float>(target[i], context[j], alpha)));
    const double ba = sigmoid(static_cast<double>(score<float>(target[j], context[i], alpha)));
    return 0.5 * (ab + ba);
  });
}

struct RocPoint {
  double threshold;  // accept when score >= threshold
  double false_positive_rate;
  double false_negative_rate;
};

/// Operating points from "accept nothing" (+inf) to "accept everything".
inline std::vector<RocPoint> roc_points(std::vector<ScoredTrial> trials) {
  std::size_t n_same = 0, n_diff = 0;
  for (const auto& t : trials) (t.is_same ? n_same : n_diff)++;
  if (n_same == 0 || n_diff == 0)
    throw InvalidArgument("degenerate trial set: need at least one same and one different trial");
  std::sort(trials.begin(), trials.end(), [](const auto& a, const auto& b) { return a.score > b.score; });
  std::vector<RocPoint> pts;
  pts.push_back({std::numeric_limits<double>::infinity(), 0.0, 1.0});
  std::size_t acc_same = 0, acc_diff = 0;
  for (std::size_t i = 0; i < trials.size();) {
    const double s = trials[i].score;
    for (; i < trials.size() && trials[i].score == s; ++i) (trials[i].is_same ? acc_same : acc_diff)++;
    pts.push_back({s, static_cast<double>(acc_diff) / n_diff, static_cast<double>(n_same - acc_same) / n_same});
  }
  return pts;
}

struct EerResult {
  double eer = 0.0;
  double threshold = 0.0;
};

/// Rate where false positives and false negatives balance. Between two
/// adjacent operating points the ROC is interpolated linearly.
inline EerResult equal_error_rate(const std::vector<ScoredTrial>& trials) {
  const auto pts = roc_points(trials);
  for (std::size_t i = 1; i < pts.size(); ++i) {
    const double gap = pts[i].false_negative_rate - pts[i].false_positive_rate;
    if (gap > 0.0) continue;
    const auto& p0 = pts[i - 1];
    const auto& p1 = pts[i];
    const double gap0 = p0.false_negative_rate - p0.false_positive_rate;  // > 0
    const double t = gap0 / (gap0 - gap);
    EerResult r;
    r.eer = p0.false_positive_rate + t * (p1.false_positive_rate - p0.false_positive_rate);
    r.threshold = std::isinf(p0.threshold) ? p1.threshold : p0.threshold + t * (p1.threshold - p0.threshold);
    return r;
  }
  // The last point accepts everything (FNR 0), so the loop always returns.
  return {pts.back().false_positive_rate, pts.back().threshold};
}

}  // namespace unspeech
