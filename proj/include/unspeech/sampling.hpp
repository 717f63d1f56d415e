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
#include <cstdint>
#include <initializer_list>
#include <random>
#include <span>
#include <vector>

#include "unspeech/common.hpp"
#include "unspeech/corpus.hpp"
#include "unspeech/fbank.hpp"

namespace unspeech {

using Rng = std::mt19937_64;

/// Engine seeded from a base seed plus a list of stream tags (epoch, step,
/// shard, ...). Distinct tag lists give independent, reproducible streams.
inline Rng derive_rng(std::uint64_t seed, std::initializer_list<std::uint64_t> tags = {}) {
  std::vector<std::uint32_t> words{static_cast<std::uint32_t>(seed),
                                   static_cast<std::uint32_t>(seed >> 32)};
  for (auto t : tags) {
    words.push_back(static_cast<std::uint32_t>(t));
    words.push_back(static_cast<std::uint32_t>(t >> 32));
  }
  std::seed_seq seq(words.begin(), words.end());
  return Rng(seq);
}

struct SamplingConfig {
  std::size_t window_width = 64;
  std::size_t contexts_per_side = 2;
  std::size_t negatives_k = 4;
  std::size_t anchor_hop = 0;  // 0 means window_width
  std::uint64_t seed = 0;

  std::size_t hop() const { return anchor_hop == 0 ? window_width : anchor_hop; }
  std::size_t positives_per_group() const { return 2 * contexts_per_side; }

  void validate() const {
    if (window_width < 1) throw InvalidArgument("window_width must be >= 1");
    if (contexts_per_side < 1) throw InvalidArgument("contexts_per_side must be >= 1");
    if (negatives_k < 1) throw InvalidArgument("negatives_k must be >= 1");
  }
};

/// Start frame of a target window inside utterance `utterance` of a Corpus.
struct Anchor {
  std::size_t utterance = 0;
  std::size_t start = 0;

  bool operator==(const Anchor&) const = default;
};

/// Where a window was cut from; carried along for error reports.
struct WindowRef {
  std::size_t utterance = 0;
  std::size_t start = 0;

  bool operator==(const WindowRef&) const = default;
};

/// Target anchors that leave room for `contexts_per_side` full windows on
/// both sides, stepping by the anchor hop.
inline std::vector<Anchor> enumerate_targets(const Corpus& corpus, const SamplingConfig& cfg) {
  cfg.validate();
  const std::size_t w = cfg.window_width;
  const std::size_t margin = cfg.contexts_per_side * w;
  std::vector<Anchor> anchors;
  for (std::size_t u = 0; u < corpus.size(); ++u) {
    const std::size_t t = corpus.utterances[u].frames;
    for (std::size_t s = margin; s + margin + w <= t; s += cfg.hop()) anchors.push_back({u, s});
  }
  return anchors;
}

/// Context window starts for an anchor, ordered left-far .. right-far.
inline std::vector<std::size_t> context_starts(const Anchor& anchor, const SamplingConfig& cfg) {
  std::vector<std::size_t> out;
  const std::size_t w = cfg.window_width;
  for (std::size_t s = cfg.contexts_per_side; s >= 1; --s) out.push_back(anchor.start - s * w);
  for (std::size_t s = 1; s <= cfg.contexts_per_side; ++s) out.push_back(anchor.start + s * w);
  return out;
}

struct TrainingExample {
  WindowRef a;
  WindowRef b;
  int label = 1;  // 1: context pair, 0: negative pair
};

/// The 2*contexts_per_side (target, context) pairs of one anchor, all class 1.
inline std::vector<TrainingExample> positive_pairs(const Anchor& anchor, const SamplingConfig& cfg) {
  std::vector<TrainingExample> out;
  for (std::size_t c : context_starts(anchor, cfg))
    out.push_back({{anchor.utterance, anchor.start}, {anchor.utterance, c}, 1});
  return out;
}

/// Uniform utterance, then uniform start inside it.
inline WindowRef negative_sample(const Corpus& corpus, const SamplingConfig& cfg, Rng& rng) {
  if (corpus.empty()) throw InvalidArgument("negative_sample: empty corpus");
  std::uniform_int_distribution<std::size_t> pick_utt(0, corpus.size() - 1);
  const std::size_t u = pick_utt(rng);
  const std::size_t frames = corpus.utterances[u].frames;
  if (frames < cfg.window_width)
    throw InvalidArgument("negative_sample: utterance shorter than the window");
  std::uniform_int_distribution<std::size_t> pick_start(0, frames - cfg.window_width);
  return {u, pick_start(rng)};
}

/// One target with its positive contexts and its k negative pairs.
struct TrainingGroup {
  WindowRef target;
  std::vector<WindowRef> contexts;
  std::vector<std::pair<WindowRef, WindowRef>> negatives;
};

struct TrainingBatch {
  std::vector<TrainingGroup> groups;

  std::size_t num_positive() const {
    std::size_t n = 0;
    for (const auto& g : groups) n += g.contexts.size();
    return n;
  }
  std::size_t num_negative() const {
    std::size_t n = 0;
    for (const auto& g : groups) n += g.negatives.size();
    return n;
  }
};

inline TrainingBatch make_batch(const Corpus& corpus, std::span<const Anchor> anchors,
                                const SamplingConfig& cfg, Rng& rng) {
  cfg.validate();
  if (anchors.empty()) throw InvalidArgument("make_batch: no anchors");
  TrainingBatch batch;
  batch.groups.reserve(anchors.size());
  for (const Anchor& a : anchors) {
    TrainingGroup g;
    g.target = {a.utterance, a.start};
    for (std::size_t c : context_starts(a, cfg)) g.contexts.push_back({a.utterance, c});
    for (std::size_t i = 0; i < cfg.negatives_k; ++i) {
      const WindowRef first = negative_sample(corpus, cfg, rng);
      const WindowRef second = negative_sample(corpus, cfg, rng);
      g.negatives.emplace_back(first, second);
    }
    batch.groups.push_back(std::move(g));
  }
  return batch;
}

inline WindowView view_of(const Corpus& corpus, const WindowRef& ref, std::size_t width) {
  return slice_window(corpus.utterances.at(ref.utterance), ref.start, width);
}

/// Anchors in the order visited during `epoch`.
inline std::vector<Anchor> epoch_order(std::vector<Anchor> anchors, std::uint64_t seed,
                                       std::uint64_t epoch) {
  Rng rng = derive_rng(seed, {0x65706f6368ULL, epoch});
  std::shuffle(anchors.begin(), anchors.end(), rng);
  return anchors;
}

/// Shard `index` of `count` (round-robin over the anchor list). Each shard
/// draws negatives from derive_rng(seed, {shard tag, index}).
inline std::vector<Anchor> shard_anchors(std::span<const Anchor> anchors, std::size_t index,
                                         std::size_t count) {
  if (count == 0 || index >= count) throw InvalidArgument("shard index out of range");
  std::vector<Anchor> out;
  for (std::size_t i = index; i < anchors.size(); i += count) out.push_back(anchors[i]);
  return out;
}

inline Rng shard_rng(std::uint64_t seed, std::size_t index) {
  return derive_rng(seed, {0x7368617264ULL, index});
}

}  // namespace unspeech
