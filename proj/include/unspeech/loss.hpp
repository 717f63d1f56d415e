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

#include <cmath>
#include <span>
#include <vector>

#include "unspeech/common.hpp"

namespace unspeech {

template <typename T>
T sigmoid(T x) {
  if (x >= T(0)) return T(1) / (T(1) + std::exp(-x));
  const T e = std::exp(x);
  return e / (T(1) + e);
}

/// log(1 + exp(x)) without overflow.
template <typename T>
T softplus(T x) {
  return std::max(x, T(0)) + std::log1p(std::exp(-std::abs(x)));
}

/// C * -log(sigmoid(x)) + (1 - C) * -log(1 - sigmoid(x)).
template <typename T>
T logistic_loss(T x, int label) {
  return label == 1 ? softplus(-x) : softplus(x);
}

/// d logistic_loss / dx.
template <typename T>
T logistic_loss_grad(T x, int label) {
  return label == 1 ? -sigmoid(-x) : sigmoid(x);
}

/// Logit of a pair: both embeddings are scaled by alpha before the dot
/// product, so the result is alpha^2 * <a, b>.
template <typename T>
T score(std::span<const T> a, std::span<const T> b, T alpha) {
  if (a.size() != b.size())
    throw ShapeError("score: embedding dims differ (" + std::to_string(a.size()) + " vs " +
                     std::to_string(b.size()) + ")");
  T dot = T(0);
  for (std::size_t i = 0; i < a.size(); ++i) dot += a[i] * b[i];
  return alpha * alpha * dot;
}

/// Logits of one target group.
template <typename T>
struct GroupLogits {
  std::vector<T> positive;
  std::vector<T> negative;
};

/// Weight of one positive pair in a group with `num_positive` positives and
/// k negatives: the positives jointly carry weight k, matching the k
/// negatives. With a single positive this is k itself.
template <typename T>
T positive_pair_weight(std::size_t num_positive, std::size_t k) {
  return static_cast<T>(k) / static_cast<T>(num_positive);
}

/// Loss of one group: the positive pairs share a total weight of k, every
/// negative pair has weight 1.
template <typename T>
T group_neg_loss(const GroupLogits<T>& g, std::size_t k) {
  T loss = T(0);
  const T wp = g.positive.empty() ? T(0) : positive_pair_weight<T>(g.positive.size(), k);
  for (T p : g.positive) loss += wp * logistic_loss(p, 1);
  for (T n : g.negative) loss += logistic_loss(n, 0);
  return loss;
}

/// Mean over groups of group_neg_loss.
template <typename T>
T neg_loss(std::span<const GroupLogits<T>> groups, std::size_t k) {
  if (groups.empty()) throw InvalidArgument("neg_loss: empty batch");
  T total = T(0);
  for (const auto& g : groups) total += group_neg_loss(g, k);
  return total / static_cast<T>(groups.size());
}

}  // namespace unspeech
