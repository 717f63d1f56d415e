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
#include <functional>
#include <span>
#include <thread>
#include <vector>

#include "unspeech/fbank.hpp"
#include "unspeech/loss.hpp"
#include "unspeech/model.hpp"
#include "unspeech/sampling.hpp"

namespace unspeech {

/// A TrainingGroup resolved to feature windows.
struct ViewGroup {
  WindowView target;
  std::vector<WindowView> contexts;
  std::vector<std::pair<WindowView, WindowView>> negatives;
};

inline std::vector<ViewGroup> resolve_batch(const Corpus& corpus, const TrainingBatch& batch,
                                            std::size_t width) {
  std::vector<ViewGroup> out;
  out.reserve(batch.groups.size());
  for (const auto& g : batch.groups) {
    ViewGroup v;
    v.target = view_of(corpus, g.target, width);
    for (const auto& c : g.contexts) v.contexts.push_back(view_of(corpus, c, width));
    for (const auto& [a, b] : g.negatives) v.negatives.emplace_back(view_of(corpus, a, width), view_of(corpus, b, width));
    out.push_back(std::move(v));
  }
  return out;
}

struct BatchStats {
  double neg_loss = 0.0;   // mean over groups
  double objective = 0.0;  // neg_loss + l2/2 * sum of squared weights
  std::size_t positive_correct = 0, positive_total = 0;
  std::size_t negative_correct = 0, negative_total = 0;
  std::vector<GroupLogits<double>> logits;

  double positive_accuracy() const {
    return positive_total ? static_cast<double>(positive_correct) / positive_total : 0.0;
  }
  double negative_accuracy() const {
    return negative_total ? static_cast<double>(negative_correct) / negative_total : 0.0;
  }
};

struct ObjectiveOptions {
  double l2_lambda = 0.0;
  Mode mode = Mode::kEval;
  /// Dropout stream for group `g` (train mode only).
  std::function<Rng(std::size_t)> dropout_rng;
  std::size_t threads = 1;
};

namespace detail {

template <typename T>
struct GroupResult {
  T loss = T(0);
  GroupLogits<T> logits;
};

/// Forward + (optionally) backward of one group. Loss contributions are
/// scaled by `weight` (1/num_groups) before backpropagation.
template <typename T>
GroupResult<T> run_group(const SiameseModel<T>& model, const ViewGroup& g, std::size_t k, T weight, Mode mode,
                         Rng* rng, ParamSet<T>* grads) {
  const T alpha = model.alpha();
  const std::size_t dim = model.arch().embedding_dim();
  GroupResult<T> r;

  auto target = model.forward(g.target, Head::kTarget, mode, rng);
  std::vector<WindowTrace<T>> contexts;
  for (const auto& c : g.contexts) contexts.push_back(model.forward(c, Head::kContext, mode, rng));
  std::vector<std::pair<WindowTrace<T>, WindowTrace<T>>> negatives;
  for (const auto& [a, b] : g.negatives) {
    auto ta = model.forward(a, Head::kTarget, mode, rng);
    auto tb = model.forward(b, Head::kContext, mode, rng);
    negatives.emplace_back(std::move(ta), std::move(tb));
  }

  std::vector<T> d_target(dim, T(0));
  T d_alpha = T(0);
  auto pair = [&](const std::vector<T>& ea, const std::vector<T>& eb, int label, T pair_weight,
                  std::vector<T>* da, std::vector<T>* db) {
    T dot = T(0);
    for (std::size_t i = 0; i < dim; ++i) dot += ea[i] * eb[i];
    const T x = alpha * alpha * dot;
    r.loss += pair_weight * logistic_loss(x, label);
    (label == 1 ? r.logits.positive : r.logits.negative).push_back(x);
    if (!grads) return;
    const T dx = weight * pair_weight * logistic_loss_grad(x, label);
    d_alpha += dx * T(2) * alpha * dot;
    const T s = dx * alpha * alpha;
    for (std::size_t i = 0; i < dim; ++i) {
      (*da)[i] += s * eb[i];
      (*db)[i] += s * ea[i];
    }
  };

  std::vector<std::vector<T>> d_contexts(contexts.size(), std::vector<T>(grads ? dim : 0, T(0)));
  for (std::size_t j = 0; j < contexts.size(); ++j)
    pair(target.embedding(), contexts[j].embedding(), 1, positive_pair_weight<T>(contexts.size(), k), &d_target,
         &d_contexts[j]);
  std::vector<std::vector<T>> d_neg_a(negatives.size(), std::vector<T>(grads ? dim : 0, T(0)));
  auto d_neg_b = d_neg_a;
  for (std::size_t i = 0; i < negatives.size(); ++i)
    pair(negatives[i].first.embedding(), negatives[i].second.embedding(), 0, T(1), &d_neg_a[i], &d_neg_b[i]);

  if (grads) {
    model.backward(target, d_target, *grads);
    for (std::size_t j = 0; j < contexts.size(); ++j) model.backward(contexts[j], d_contexts[j], *grads);
    for (std::size_t i = 0; i < negatives.size(); ++i) {
      model.backward(negatives[i].first, d_neg_a[i], *grads);
      model.backward(negatives[i].second, d_neg_b[i], *grads);
    }
    grads->tensors[model.alpha_index()].data[0] += d_alpha;
  }
  return r;
}

}  // namespace detail

/// Mean NEG loss over the groups plus the L2 penalty on weight tensors.
/// When `grads` is given it receives the exact gradient of that objective
/// (overwritten, not accumulated). Groups are reduced in index order so
/// the result does not depend on `options.threads`.
template <typename T>
BatchStats evaluate_batch(const SiameseModel<T>& model, std::span<const ViewGroup> groups, std::size_t k,
                          const ObjectiveOptions& options, ParamSet<T>* grads = nullptr) {
  if (groups.empty()) throw InvalidArgument("evaluate_batch: empty batch");
  if (options.mode == Mode::kTrain && model.arch().dropout_p > 0.0 && !options.dropout_rng)
    throw InvalidArgument("evaluate_batch: train mode needs a dropout stream");
  const std::size_t n = groups.size();
  const T weight = T(1) / static_cast<T>(n);
  const std::size_t threads = std::max<std::size_t>(1, std::min(options.threads, n));

  if (grads) *grads = model.params().zeros_like();
  std::vector<ParamSet<T>> scratch(grads ? threads : 0);
  for (auto& s : scratch) s = model.params().zeros_like();
  std::vector<detail::GroupResult<T>> results(n);

  auto work = [&](std::size_t g, std::size_t slot) {
    Rng rng = options.mode == Mode::kTrain && options.dropout_rng ? options.dropout_rng(g) : Rng{};
    ParamSet<T>* buf = nullptr;
    if (grads) {
      buf = &scratch[slot];
      buf->fill_zero();
    }
    results[g] = detail::run_group(model, groups[g], k, weight, options.mode, &rng, buf);
  };

  for (std::size_t base = 0; base < n; base += threads) {
    const std::size_t wave = std::min(threads, n - base);
    if (wave == 1) {
      work(base, 0);
    } else {
      std::vector<std::jthread> pool;
      for (std::size_t t = 0; t < wave; ++t) pool.emplace_back(work, base + t, t);
    }
    if (grads)
      for (std::size_t t = 0; t < wave; ++t) grads->add_scaled(scratch[t], T(1));
  }

  BatchStats st;
  T total = T(0);
  for (const auto& r : results) {
    total += r.loss;
    GroupLogits<double> gl;
    for (T p : r.logits.positive) {
      gl.positive.push_back(static_cast<double>(p));
      st.positive_correct += p > T(0);
    }
    for (T x : r.logits.negative) {
      gl.negative.push_back(static_cast<double>(x));
      st.negative_correct += x < T(0);
    }
    st.positive_total += gl.positive.size();
    st.negative_total += gl.negative.size();
    st.logits.push_back(std::move(gl));
  }
  const T mean = total * weight;
  T l2 = T(0);
  if (options.l2_lambda > 0.0) {
    const T lambda = static_cast<T>(options.l2_lambda);
    for (std::size_t i = 0; i < model.params().tensors.size(); ++i) {
      const auto& p = model.params().tensors[i];
      if (!p.decay) continue;
      for (std::size_t j = 0; j < p.size(); ++j) {
        l2 += p.data[j] * p.data[j];
        if (grads) grads->tensors[i].data[j] += lambda * p.data[j];
      }
    }
    l2 *= lambda / T(2);
  }
  st.neg_loss = static_cast<double>(mean);
  st.objective = static_cast<double>(mean + l2);
  return st;
}

}  // namespace unspeech
