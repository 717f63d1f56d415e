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
#include <chrono>
#include <cmath>
#include <cstdint>
#include <functional>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "unspeech/adam.hpp"
#include "unspeech/checkpoint.hpp"
#include "unspeech/corpus.hpp"
#include "unspeech/eer.hpp"
#include "unspeech/inference.hpp"
#include "unspeech/model.hpp"
#include "unspeech/objective.hpp"
#include "unspeech/sampling.hpp"

namespace unspeech {

struct TrainConfig {
  SamplingConfig sampling;
  ArchitectureConfig arch;
  OptimizerConfig optim;
  std::size_t batch_groups = 32;
  std::size_t epochs = 1;
  std::size_t max_steps = 0;  // 0: run all epochs
  std::size_t checkpoint_every = 0;
  std::size_t log_every = 10;
  std::size_t eval_every = 0;  // held-out EER cadence, 0 disables
  std::size_t eval_stride = 10;
  std::size_t threads = 1;
  bool log_wall_time = false;
  std::uint64_t seed = 0;

  void validate() const {
    sampling.validate();
    arch.validate();
    optim.validate();
    if (batch_groups < 1) throw InvalidArgument("batch_groups must be >= 1");
    if (epochs < 1) throw InvalidArgument("epochs must be >= 1");
    if (sampling.window_width != arch.input_width)
      throw ShapeError("window_width " + std::to_string(sampling.window_width) + " does not match the model input width " +
                       std::to_string(arch.input_width));
  }
};

inline void to_json(nlohmann::json& j, const SamplingConfig& s) {
  j = {{"window_width", s.window_width}, {"contexts_per_side", s.contexts_per_side},
       {"negatives_k", s.negatives_k}, {"anchor_hop", s.anchor_hop}};
}
inline void from_json(const nlohmann::json& j, SamplingConfig& s) {
  SamplingConfig d;
  s.window_width = j.value("window_width", d.window_width);
  s.contexts_per_side = j.value("contexts_per_side", d.contexts_per_side);
  s.negatives_k = j.value("negatives_k", d.negatives_k);
  s.anchor_hop = j.value("anchor_hop", d.anchor_hop);
}
inline void to_json(nlohmann::json& j, const TrainConfig& c) {
  j = {{"sampling", c.sampling}, {"arch", c.arch}, {"optim", c.optim},
       {"batch_groups", c.batch_groups}, {"epochs", c.epochs}, {"max_steps", c.max_steps},
       {"checkpoint_every", c.checkpoint_every}, {"log_every", c.log_every},
       {"eval_every", c.eval_every}, {"eval_stride", c.eval_stride}, {"threads", c.threads},
       {"log_wall_time", c.log_wall_time}, {"seed", c.seed}};
}
inline void from_json(const nlohmann::json& j, TrainConfig& c) {
  TrainConfig d;
  static const char* known[] = {"sampling", "arch", "optim", "batch_groups", "epochs", "max_steps",
                                "checkpoint_every", "log_every", "eval_every", "eval_stride", "threads",
                                "log_wall_time", "seed"};
  for (const auto& [key, value] : j.items())
    if (std::find(std::begin(known), std::end(known), key) == std::end(known))
      throw InvalidArgument("unknown train config field \"" + key + "\"");
  c.sampling = j.value("sampling", d.sampling);
  c.arch = j.value("arch", d.arch);
  c.optim = j.value("optim", d.optim);
  c.batch_groups = j.value("batch_groups", d.batch_groups);
  c.epochs = j.value("epochs", d.epochs);
  c.max_steps = j.value("max_steps", d.max_steps);
  c.checkpoint_every = j.value("checkpoint_every", d.checkpoint_every);
  c.log_every = j.value("log_every", d.log_every);
  c.eval_every = j.value("eval_every", d.eval_every);
  c.eval_stride = j.value("eval_stride", d.eval_stride);
  c.threads = j.value("threads", d.threads);
  c.log_wall_time = j.value("log_wall_time", d.log_wall_time);
  c.seed = j.value("seed", d.seed);
  c.sampling.seed = c.seed;
}

struct TrainLogRecord {
  std::uint64_t step = 0;
  std::uint64_t epoch = 0;
  double neg_loss = 0.0;
  double positive_accuracy = 0.0;
  double negative_accuracy = 0.0;
  double alpha = 0.0;
  double wall_time = 0.0;
  std::optional<double> eer;

  nlohmann::json to_json(bool with_wall_time) const {
    nlohmann::json j{{"step", step}, {"epoch", epoch}, {"neg_loss", neg_loss},
                     {"positive_accuracy", positive_accuracy}, {"negative_accuracy", negative_accuracy},
                     {"alpha", alpha}};
    if (with_wall_time) j["wall_time"] = wall_time;
    if (eer) j["eer"] = *eer;
    return j;
  }
};

/// Training stopped on a non-finite loss or gradient.
class TrainingAborted : public Error {
 public:
  using Error::Error;
};

/// Held-out utterances with speaker labels for EER snapshots.
struct LabeledSet {
  std::vector<FeatureMatrix> features;
  std::vector<std::string> speakers;
};

/// Utterance embeddings -> d2 trials -> EER. Runs on a copy of the model.
inline EerResult evaluate_eer(const SiameseModel<float>& model, const LabeledSet& held_out, std::size_t stride) {
  std::vector<std::vector<float>> embs;
  embs.reserve(held_out.features.size());
  EmbedOptions opts;
  opts.stride = stride;
  for (const auto& f : held_out.features) embs.push_back(embed_utterance(f, model, opts));
  return equal_error_rate(d2_trials(embs, held_out.speakers));
}

inline EerResult evaluate_during_training(const Checkpoint& ckpt, const LabeledSet& held_out, std::size_t stride = 10) {
  return evaluate_eer(ckpt.model(), held_out, stride);
}

struct TrainCallbacks {
  std::function<void(const TrainLogRecord&)> on_log;
  std::function<void(const Checkpoint&)> on_checkpoint;
};

struct TrainResult {
  Checkpoint checkpoint;
  std::vector<TrainLogRecord> log;
};

namespace detail {
inline constexpr std::uint64_t kInitTag = 0x696e6974ULL;
inline constexpr std::uint64_t kNegTag = 0x6e6567ULL;
inline constexpr std::uint64_t kDropTag = 0x64726f70ULL;
}  // namespace detail

/// Fresh model parameters for `config`; identical for identical seeds.
inline SiameseModel<float> initial_model(const TrainConfig& config) {
  Rng rng = derive_rng(config.seed, {detail::kInitTag});
  return SiameseModel<float>(config.arch, rng());
}

/// Seeded training loop. Step s (0-based) of epoch e = s / steps_per_epoch
/// takes the next batch_groups anchors of that epoch's shuffled order and
/// draws negatives and dropout masks from streams keyed on (seed, s), so a
/// run resumed from a checkpoint retraces the uninterrupted trajectory.
inline TrainResult train(const Corpus& corpus, TrainConfig config, const std::optional<Checkpoint>& resume = std::nullopt,
                         const TrainCallbacks& callbacks = {}, const LabeledSet* held_out = nullptr) {
  config.sampling.seed = config.seed;
  config.validate();
  if (corpus.empty()) throw InvalidArgument("train: corpus is empty");
  if (corpus.bins() != config.arch.input_bins)
    throw ShapeError("corpus has " + std::to_string(corpus.bins()) + " mel bins, model expects " +
                     std::to_string(config.arch.input_bins));
  if (corpus.window_width != config.sampling.window_width)
    throw ShapeError("corpus was loaded for window width " + std::to_string(corpus.window_width) + ", config uses " +
                     std::to_string(config.sampling.window_width));

  const auto anchors = enumerate_targets(corpus, config.sampling);
  if (anchors.empty()) throw InvalidArgument("train: no utterance is long enough for a target with its contexts");
  const std::size_t steps_per_epoch = (anchors.size() + config.batch_groups - 1) / config.batch_groups;
  std::size_t total_steps = steps_per_epoch * config.epochs;
  if (config.max_steps > 0) total_steps = std::min(total_steps, config.max_steps);

  SiameseModel<float> model = initial_model(config);
  AdamState<float> adam(model.params());
  std::uint64_t step = 0;
  if (resume) {
    if (!(resume->arch == config.arch)) throw ShapeError("resume: checkpoint architecture differs from the config");
    if (resume->seed != config.seed)
      throw InvalidArgument("resume: checkpoint seed " + std::to_string(resume->seed) + " differs from config seed " +
                            std::to_string(config.seed));
    model.assign_params(resume->params);
    adam = resume->adam;
    step = resume->step;
  }

  const nlohmann::json meta = config;
  auto snapshot = [&] {
    Checkpoint c = make_checkpoint(model, adam, config.optim, config.seed, step);
    c.meta = meta;
    return c;
  };

  TrainResult result;
  const auto t0 = std::chrono::steady_clock::now();
  std::vector<Anchor> order;
  std::uint64_t order_epoch = ~std::uint64_t{0};
  ParamSet<float> grads;
  const std::size_t k = config.sampling.negatives_k;

  while (step < total_steps) {
    const std::uint64_t epoch = step / steps_per_epoch;
    if (epoch != order_epoch) {
      order = epoch_order(anchors, config.seed, epoch);
      order_epoch = epoch;
    }
    const std::size_t pos = (step % steps_per_epoch) * config.batch_groups;
    const std::size_t count = std::min(config.batch_groups, order.size() - pos);
    Rng neg_rng = derive_rng(config.seed, {detail::kNegTag, step});
    const auto batch = make_batch(corpus, std::span(order).subspan(pos, count), config.sampling, neg_rng);
    const auto views = resolve_batch(corpus, batch, config.sampling.window_width);

    ObjectiveOptions opts;
    opts.l2_lambda = config.optim.l2_lambda;
    opts.mode = Mode::kTrain;
    opts.threads = config.threads;
    const std::uint64_t this_step = step;
    opts.dropout_rng = [&](std::size_t g) { return derive_rng(config.seed, {detail::kDropTag, this_step, g}); };
    const auto stats = evaluate_batch(model, views, k, opts, &grads);

    auto provenance = [&] {
      std::ostringstream os;
      os << "step " << step << " (epoch " << epoch << "), targets";
      for (std::size_t g = 0; g < std::min<std::size_t>(batch.groups.size(), 4); ++g)
        os << " " << corpus.utterances[batch.groups[g].target.utterance].utterance_id << "@"
           << batch.groups[g].target.start;
      if (batch.groups.size() > 4) os << " ...";
      return os.str();
    };
    if (!std::isfinite(stats.objective)) throw TrainingAborted("non-finite loss at " + provenance());
    try {
      adam_step(model.params(), grads, adam, config.optim);
    } catch (const NonFiniteGradient& e) {
      throw TrainingAborted(std::string(e.what()) + " at " + provenance());
    }
    if (!model.params().all_finite()) throw TrainingAborted("non-finite parameters after " + provenance());
    ++step;

    const bool log_now = (config.log_every > 0 && step % config.log_every == 0) || step == total_steps;
    const bool eval_now = held_out && config.eval_every > 0 && (step % config.eval_every == 0 || step == total_steps);
    if (log_now || eval_now) {
      TrainLogRecord rec;
      rec.step = step;
      rec.epoch = epoch;
      rec.neg_loss = stats.neg_loss;
      rec.positive_accuracy = stats.positive_accuracy();
      rec.negative_accuracy = stats.negative_accuracy();
      rec.alpha = model.alpha();
      rec.wall_time = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
      if (eval_now) rec.eer = evaluate_eer(SiameseModel<float>(model), *held_out, config.eval_stride).eer;
      result.log.push_back(rec);
      if (callbacks.on_log) callbacks.on_log(rec);
    }
    if (config.checkpoint_every > 0 && step % config.checkpoint_every == 0 && callbacks.on_checkpoint)
      callbacks.on_checkpoint(snapshot());
  }
  result.checkpoint = snapshot();
  return result;
}

}  // namespace unspeech
