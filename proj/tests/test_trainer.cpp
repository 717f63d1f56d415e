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


#include <fstream>
#include <sstream>

#include <gtest/gtest.h>

#include "test_util.hpp"
#include "unspeech/synthetic.hpp"
#include "unspeech/trainer.hpp"

namespace unspeech {
namespace {

using testing::TempDir;

SyntheticCorpus two_speakers() {
  SyntheticCorpusConfig c;
  c.speakers = 2;
  c.utterances_per_speaker = 6;
  c.min_frames = 96;
  c.max_frames = 160;
  c.seed = 3;
  return make_synthetic_corpus(c);
}

TrainConfig small_config(std::size_t steps) {
  TrainConfig t;
  t.sampling.window_width = 16;
  t.arch.input_width = 16;
  t.arch.input_bins = 40;
  t.arch.conv_stages = {{1, 4}, {1, 8}};
  t.arch.fc_widths = {32, 16};
  t.batch_groups = 4;
  t.epochs = 1000;
  t.max_steps = steps;
  t.log_every = 0;
  t.seed = 11;
  return t;
}

std::string slurp(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

TEST(Trainer, SameSeedBitIdenticalCheckpoints) {
  TempDir dir;
  const auto syn = two_speakers();
  const auto corpus = make_corpus(syn.features, 16);
  const auto cfg = small_config(30);
  save_checkpoint(train(corpus, cfg).checkpoint, dir.file("a.uckp"));
  save_checkpoint(train(corpus, cfg).checkpoint, dir.file("b.uckp"));
  EXPECT_EQ(slurp(dir.file("a.uckp")), slurp(dir.file("b.uckp")));

  auto other = cfg;
  other.seed = 12;
  save_checkpoint(train(corpus, other).checkpoint, dir.file("c.uckp"));
  EXPECT_NE(slurp(dir.file("a.uckp")), slurp(dir.file("c.uckp")));
}

TEST(Trainer, ThreadCountDoesNotChangeTheTrajectory) {
  const auto corpus = make_corpus(two_speakers().features, 16);
  auto cfg = small_config(10);
  const auto one = train(corpus, cfg).checkpoint;
  cfg.threads = 3;
  const auto three = train(corpus, cfg).checkpoint;
  for (std::size_t t = 0; t < one.params.tensors.size(); ++t)
    EXPECT_EQ(one.params.tensors[t].data, three.params.tensors[t].data);
}

TEST(Trainer, ResumeMatchesUninterruptedRun) {
  TempDir dir;
  const auto corpus = make_corpus(two_speakers().features, 16);
  const auto straight = train(corpus, small_config(200)).checkpoint;

  const auto half = train(corpus, small_config(100)).checkpoint;
  save_checkpoint(half, dir.file("half.uckp"));
  const auto reloaded = load_checkpoint(dir.file("half.uckp"));
  const auto resumed = train(corpus, small_config(200), reloaded).checkpoint;

  EXPECT_EQ(resumed.step, 200u);
  EXPECT_EQ(resumed.adam.step, straight.adam.step);
  for (std::size_t t = 0; t < straight.params.tensors.size(); ++t) {
    EXPECT_EQ(resumed.params.tensors[t].data, straight.params.tensors[t].data) << straight.params.tensors[t].name;
    EXPECT_EQ(resumed.adam.m.tensors[t].data, straight.adam.m.tensors[t].data);
    EXPECT_EQ(resumed.adam.v.tensors[t].data, straight.adam.v.tensors[t].data);
  }
}

TEST(Trainer, ResumeRejectsForeignCheckpoint) {
  const auto corpus = make_corpus(two_speakers().features, 16);
  const auto ck = train(corpus, small_config(2)).checkpoint;
  auto cfg = small_config(4);
  cfg.seed = 99;
  EXPECT_THROW(train(corpus, cfg, ck), InvalidArgument);
  cfg = small_config(4);
  cfg.arch.fc_widths = {8, 16};
  EXPECT_THROW(train(corpus, cfg, ck), ShapeError);
}

TEST(Trainer, LearnsTwoSpeakers) {
  const auto syn = two_speakers();
  const auto corpus = make_corpus(syn.features, 16);
  auto cfg = small_config(500);
  cfg.log_every = 50;
  const auto res = train(corpus, cfg);

  // Loss on one fixed evaluation batch, before and after training.
  const auto anchors = enumerate_targets(corpus, cfg.sampling);
  Rng rng = derive_rng(5, {1});
  const auto batch = make_batch(corpus, anchors, cfg.sampling, rng);
  const auto views = resolve_batch(corpus, batch, 16);
  ObjectiveOptions eval;
  const double before = evaluate_batch(initial_model(cfg), views, 4, eval).neg_loss;
  const double after = evaluate_batch(res.checkpoint.model(), views, 4, eval).neg_loss;
  EXPECT_LT(after, 0.5 * before) << before << " -> " << after;

  const LabeledSet held{syn.features, syn.speakers};
  EXPECT_LT(evaluate_during_training(res.checkpoint, held, 4).eer, 0.1);
  ASSERT_EQ(res.log.size(), 10u);
  EXPECT_EQ(res.log.back().step, 500u);
}

TEST(Trainer, SingleSpeakerHeldOutIsDegenerate) {
  auto syn = two_speakers();
  const auto corpus = make_corpus(syn.features, 16);
  const auto ck = train(corpus, small_config(1)).checkpoint;
  LabeledSet held{{syn.features[0], syn.features[1]}, {"a", "a"}};
  EXPECT_THROW(evaluate_during_training(ck, held, 4), InvalidArgument);
}

TEST(Trainer, LogAndCheckpointCallbacks) {
  const auto syn = two_speakers();
  const auto corpus = make_corpus(syn.features, 16);
  auto cfg = small_config(12);
  cfg.log_every = 5;
  cfg.checkpoint_every = 4;
  cfg.eval_every = 6;
  std::vector<std::uint64_t> logged, saved;
  std::size_t with_eer = 0;
  TrainCallbacks cb;
  cb.on_log = [&](const TrainLogRecord& r) {
    logged.push_back(r.step);
    with_eer += r.eer.has_value();
    EXPECT_FALSE(r.to_json(false).contains("wall_time"));
  };
  cb.on_checkpoint = [&](const Checkpoint& c) { saved.push_back(c.step); };
  const LabeledSet held{syn.features, syn.speakers};
  train(corpus, cfg, std::nullopt, cb, &held);
  EXPECT_EQ(logged, (std::vector<std::uint64_t>{5, 6, 10, 12}));
  EXPECT_EQ(saved, (std::vector<std::uint64_t>{4, 8, 12}));
  EXPECT_EQ(with_eer, 2u);
}

TEST(Trainer, RejectsInconsistentConfig) {
  const auto corpus = make_corpus(two_speakers().features, 16);
  auto cfg = small_config(1);
  cfg.sampling.window_width = 32;
  EXPECT_THROW(train(corpus, cfg), ShapeError);
  EXPECT_THROW(train(Corpus{}, small_config(1)), InvalidArgument);
}

TEST(TrainConfig, JsonRoundTripAndUnknownFields) {
  auto cfg = small_config(7);
  cfg.optim.learning_rate = 3e-3;
  const nlohmann::json j = cfg;
  const auto back = j.get<TrainConfig>();
  EXPECT_EQ(nlohmann::json(back), j);
  auto bad = j;
  bad["learning_rate"] = 1.0;
  EXPECT_THROW(bad.get<TrainConfig>(), InvalidArgument);
}

TEST(Synthetic, ShapeAndDeterminism) {
  const auto a = make_synthetic_corpus({}), b = make_synthetic_corpus({});
  ASSERT_EQ(a.features.size(), 160u);
  EXPECT_EQ(a.features[17].values, b.features[17].values);
  EXPECT_EQ(a.speakers[0], "spk0");
  EXPECT_EQ(a.speakers[159], "spk7");
  for (const auto& f : a.features) {
    EXPECT_GE(f.frames, 384u);
    EXPECT_LE(f.frames, 640u);
    EXPECT_EQ(f.bins, 40u);
  }
  EXPECT_EQ(a.manifest().speakers(), a.speakers);
}

}  // namespace
}  // namespace unspeech
