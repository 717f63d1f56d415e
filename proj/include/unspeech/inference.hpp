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

#include "unspeech/fbank.hpp"
#include "unspeech/loss.hpp"
#include "unspeech/model.hpp"

namespace unspeech {

/// Window starts 0, stride, 2*stride, ... with the last window moved back
/// to end exactly at `frames` when the stride does not divide evenly.
inline std::vector<std::size_t> sliding_starts(std::size_t frames, std::size_t width, std::size_t stride) {
  if (stride == 0) throw InvalidArgument("stride must be >= 1");
  if (frames < width)
    throw InvalidArgument("utterance of " + std::to_string(frames) + " frames is shorter than one window (" +
                          std::to_string(width) + ")");
  std::vector<std::size_t> starts;
  std::size_t s = 0;
  for (; s + width <= frames; s += stride) starts.push_back(s);
  if (starts.back() + width < frames) starts.push_back(frames - width);
  return starts;
}

struct EmbedOptions {
  std::size_t stride = 10;
  /// Unit-normalize each window embedding before averaging.
  bool normalize_windows = false;
  Head head = Head::kTarget;
};

template <typename T>
void normalize_inplace(std::vector<T>& v) {
  T n = T(0);
  for (T x : v) n += x * x;
  n = std::sqrt(n);
  if (!(n > T(0))) throw InvalidArgument("cannot normalize a zero vector");
  for (T& x : v) x /= n;
}

/// Mean of the eval-mode window embeddings over a sliding window.
template <typename T>
std::vector<T> embed_utterance(const FeatureMatrix& features, const SiameseModel<T>& model,
                               const EmbedOptions& opts = {}) {
  const std::size_t width = model.arch().input_width;
  const auto starts = sliding_starts(features.frames, width, opts.stride);
  std::vector<T> mean(model.arch().embedding_dim(), T(0));
  for (std::size_t s : starts) {
    auto e = model.embed(slice_window(features, s, width), opts.head);
    if (opts.normalize_windows) normalize_inplace(e);
    for (std::size_t i = 0; i < e.size(); ++i) mean[i] += e[i];
  }
  for (auto& v : mean) v /= static_cast<T>(starts.size());
  return mean;
}

/// sigmoid(score(emb_t(a), emb_c(b))); not symmetric in its arguments.
template <typename T>
T distance_d1(const WindowView& a, const WindowView& b, const SiameseModel<T>& model) {
  const auto ea = model.embed(a, Head::kTarget);
  const auto eb = model.embed(b, Head::kContext);
  return sigmoid(score<T>(ea, eb, model.alpha()));
}

/// Euclidean distance between the unit-normalized vectors; in [0, 2].
/// With `normalize` off it is the plain Euclidean distance.
template <typename T>
T distance_d2(std::span<const T> a, std::span<const T> b, bool normalize = true) {
  if (a.size() != b.size()) throw ShapeError("distance_d2: dims differ");
  T na = T(0), nb = T(0);
  for (std::size_t i = 0; i < a.size(); ++i) {
    na += a[i] * a[i];
    nb += b[i] * b[i];
  }
  na = std::sqrt(na);
  nb = std::sqrt(nb);
  if (normalize && (!(na > T(0)) || !(nb > T(0)))) throw InvalidArgument("distance_d2: zero vector");
  const T sa = normalize ? T(1) / na : T(1), sb = normalize ? T(1) / nb : T(1);
  T d = T(0);
  for (std::size_t i = 0; i < a.size(); ++i) {
    const T diff = a[i] * sa - b[i] * sb;
    d += diff * diff;
  }
  return std::sqrt(d);
}

}  // namespace unspeech
