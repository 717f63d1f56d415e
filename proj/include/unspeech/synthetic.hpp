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
#include <cstdio>
#include <cstdint>
#include <numbers>
#include <random>
#include <string>
#include <vector>

#include "unspeech/corpus.hpp"
#include "unspeech/fbank.hpp"
#include "unspeech/sampling.hpp"

namespace unspeech {

/// Stand-in corpus: each speaker owns a fixed random log-mel template and
/// an utterance is template + per-utterance slow gain contour + i.i.d. noise.
struct SyntheticCorpusConfig {
  std::size_t speakers = 8;
  std::size_t utterances_per_speaker = 20;
  std::size_t min_frames = 384;
  std::size_t max_frames = 640;
  std::size_t bins = 40;
  double template_bumps = 4;       // Gaussian bumps per template
  double template_height = 2.5;    // bump height scale (log-energy units)
  double noise_std = 1.0;
  double gain_offset_std = 0.5;    // per-utterance level jitter
  double gain_amp_min = 0.25;      // slow contour amplitude range
  double gain_amp_max = 0.75;
  double gain_period_min = 200.0;  // frames
  double gain_period_max = 600.0;
  double base_level = 2.0;
  std::uint64_t seed = 1;
};

struct SyntheticCorpus {
  std::vector<FeatureMatrix> features;
  std::vector<std::string> speakers;  // parallel to features
  std::vector<std::vector<float>> templates;

  Manifest manifest() const {
    Manifest m;
    for (std::size_t i = 0; i < features.size(); ++i)
      m.entries.push_back({features[i].utterance_id, "synthetic:" + features[i].utterance_id, speakers[i],
                           static_cast<double>(features[i].frames) * 0.01});
    return m;
  }
};

inline std::vector<float> random_template(std::size_t bins, const SyntheticCorpusConfig& cfg, Rng& rng) {
  std::uniform_real_distribution<double> uni(0.0, 1.0);
  std::normal_distribution<double> normal(0.0, 1.0);
  std::vector<double> t(bins, cfg.base_level);
  const double tilt = normal(rng);
  for (std::size_t m = 0; m < bins; ++m) t[m] += tilt * (static_cast<double>(m) / bins - 0.5);
  for (int b = 0; b < static_cast<int>(cfg.template_bumps); ++b) {
    const double center = uni(rng) * bins;
    const double width = 1.5 + uni(rng) * bins / 8.0;
    const double height = cfg.template_height * normal(rng);
    for (std::size_t m = 0; m < bins; ++m) {
      const double z = (static_cast<double>(m) - center) / width;
      t[m] += height * std::exp(-0.5 * z * z);
    }
  }
  return {t.begin(), t.end()};
}

inline SyntheticCorpus make_synthetic_corpus(const SyntheticCorpusConfig& cfg) {
  if (cfg.speakers == 0 || cfg.utterances_per_speaker == 0 || cfg.bins == 0 || cfg.min_frames == 0 ||
      cfg.max_frames < cfg.min_frames)
    throw InvalidArgument("invalid synthetic corpus configuration");
  Rng rng = derive_rng(cfg.seed, {0x73796e7468ULL});
  std::uniform_real_distribution<double> uni(0.0, 1.0);
  std::normal_distribution<double> normal(0.0, 1.0);
  std::uniform_int_distribution<std::size_t> length(cfg.min_frames, cfg.max_frames);

  SyntheticCorpus out;
  for (std::size_t s = 0; s < cfg.speakers; ++s) out.templates.push_back(random_template(cfg.bins, cfg, rng));
  for (std::size_t s = 0; s < cfg.speakers; ++s) {
    for (std::size_t u = 0; u < cfg.utterances_per_speaker; ++u) {
      char id[64];
      std::snprintf(id, sizeof id, "spk%02zu-utt%03zu", s, u);
      const std::size_t frames = length(rng);
      FeatureMatrix f(id, frames, cfg.bins);
      const double offset = cfg.gain_offset_std * normal(rng);
      const double amp = cfg.gain_amp_min + (cfg.gain_amp_max - cfg.gain_amp_min) * uni(rng);
      double period[3], phase[3];
      for (int j = 0; j < 3; ++j) {
        period[j] = cfg.gain_period_min + (cfg.gain_period_max - cfg.gain_period_min) * uni(rng);
        phase[j] = 2.0 * std::numbers::pi * uni(rng);
      }
      for (std::size_t t = 0; t < frames; ++t) {
        double contour = 0.0;
        for (int j = 0; j < 3; ++j) contour += std::sin(2.0 * std::numbers::pi * t / period[j] + phase[j]);
        const double gain = offset + amp * contour / std::sqrt(3.0);
        for (std::size_t m = 0; m < cfg.bins; ++m)
          f.at(t, m) = static_cast<float>(out.templates[s][m] + gain + cfg.noise_std * normal(rng));
      }
      out.features.push_back(std::move(f));
      out.speakers.push_back("spk" + std::to_string(s));
    }
  }
  return out;
}

}  // namespace unspeech
