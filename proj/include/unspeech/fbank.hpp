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
#include <cstddef>
#include <numbers>
#include <span>
#include <string>
#include <vector>

#include "unspeech/audio.hpp"
#include "unspeech/common.hpp"
#include "unspeech/fft.hpp"

namespace unspeech {

struct FbankConfig {
  int sample_rate = 16000;
  double frame_length = 0.025;  // seconds
  double frame_shift = 0.010;   // seconds
  int num_mel_bins = 40;
  int fft_size = 0;             // 0 selects the next power of two >= frame length
  double low_freq = 0.0;
  double high_freq = 0.0;       // <= 0 means Nyquist
  double preemphasis = 0.97;    // 0 disables
  double log_floor = 1e-10;

  std::size_t frame_length_samples() const {
    return static_cast<std::size_t>(std::lround(frame_length * sample_rate));
  }
  std::size_t frame_shift_samples() const {
    return static_cast<std::size_t>(std::lround(frame_shift * sample_rate));
  }
  std::size_t padded_fft_size() const {
    return fft_size > 0 ? static_cast<std::size_t>(fft_size) : next_pow2(frame_length_samples());
  }
  double effective_high_freq() const {
    return high_freq > 0.0 ? high_freq : sample_rate / 2.0;
  }

  void validate() const {
    auto bad = [](const std::string& m) { return InvalidArgument("FbankConfig: " + m); };
    if (sample_rate <= 0) throw bad("sample_rate must be positive");
    if (!(frame_shift > 0.0) || frame_shift > frame_length)
      throw bad("need 0 < frame_shift <= frame_length");
    if (frame_shift_samples() == 0) throw bad("frame_shift rounds to 0 samples");
    if (num_mel_bins < 2) throw bad("num_mel_bins must be >= 2");
    const double hi = effective_high_freq();
    if (!(low_freq >= 0.0 && low_freq < hi && hi <= sample_rate / 2.0))
      throw bad("need 0 <= low_freq < high_freq <= sample_rate/2");
    const std::size_t n = padded_fft_size();
    if ((n & (n - 1)) != 0 || n < frame_length_samples())
      throw bad("fft_size must be a power of two >= frame length in samples");
    if (!(log_floor > 0.0)) throw bad("log_floor must be positive");
    if (preemphasis < 0.0 || preemphasis >= 1.0) throw bad("preemphasis must be in [0, 1)");
  }
};

/// Row-major (time-major) matrix of log mel energies.
struct FeatureMatrix {
  std::string utterance_id;
  std::size_t frames = 0;
  std::size_t bins = 0;
  std::vector<float> values;  // frames * bins

  FeatureMatrix() = default;
  FeatureMatrix(std::string id, std::size_t t, std::size_t m)
      : utterance_id(std::move(id)), frames(t), bins(m), values(t * m) {}

  float& at(std::size_t t, std::size_t m) { return values[t * bins + m]; }
  float at(std::size_t t, std::size_t m) const { return values[t * bins + m]; }
  const float* row(std::size_t t) const { return values.data() + t * bins; }
};

/// Non-owning view of `width` consecutive frames of a FeatureMatrix.
struct WindowView {
  const float* data = nullptr;
  std::size_t width = 0;
  std::size_t bins = 0;

  float at(std::size_t t, std::size_t m) const { return data[t * bins + m]; }
  std::span<const float> flat() const { return {data, width * bins}; }
};

inline WindowView slice_window(const FeatureMatrix& features, std::size_t start,
                               std::size_t width) {
  if (width == 0 || start > features.frames || width > features.frames - start)
    throw InvalidArgument("slice_window: [" + std::to_string(start) + ", " +
                          std::to_string(start + width) + ") outside " +
                          std::to_string(features.frames) + " frames of '" +
                          features.utterance_id + "'");
  return {features.values.data() + start * features.bins, width, features.bins};
}

inline double hz_to_mel(double hz) { return 1127.0 * std::log1p(hz / 700.0); }
inline double mel_to_hz(double mel) { return 700.0 * std::expm1(mel / 1127.0); }

/// Number of full frames that fit into `num_samples`; 0 if none.
inline std::size_t num_frames(std::size_t num_samples, const FbankConfig& cfg) {
  const std::size_t len = cfg.frame_length_samples();
  if (num_samples < len) return 0;
  return 1 + (num_samples - len) / cfg.frame_shift_samples();
}

/// Triangular filters over FFT bins 0..n/2, equally spaced on the mel scale.
/// Returns num_mel_bins rows of (n/2+1) weights.
inline std::vector<std::vector<double>> mel_filterbank(const FbankConfig& cfg) {
  const std::size_t n = cfg.padded_fft_size();
  const std::size_t nbins = n / 2 + 1;
  const double lo = hz_to_mel(cfg.low_freq);
  const double hi = hz_to_mel(cfg.effective_high_freq());
  const double step = (hi - lo) / (cfg.num_mel_bins + 1);
  std::vector<std::vector<double>> bank(cfg.num_mel_bins, std::vector<double>(nbins, 0.0));
  for (int m = 0; m < cfg.num_mel_bins; ++m) {
    const double left = lo + m * step;
    const double center = left + step;
    const double right = center + step;
    for (std::size_t k = 0; k < nbins; ++k) {
      const double mel = hz_to_mel(static_cast<double>(k) * cfg.sample_rate / static_cast<double>(n));
      if (mel > left && mel < right)
        bank[m][k] = mel <= center ? (mel - left) / step : (right - mel) / step;
    }
  }
  return bank;
}

/// Unnormalized log mel filterbank energies: optional pre-emphasis, Hamming
/// window, power spectrum, triangular mel filters, log(max(e, log_floor)).
inline FeatureMatrix compute_fbank(const AudioBuffer& audio, const FbankConfig& cfg,
                                   std::string utterance_id = {}) {
  cfg.validate();
  if (audio.sample_rate != cfg.sample_rate)
    throw InvalidArgument("compute_fbank: audio rate " + std::to_string(audio.sample_rate) +
                          " Hz does not match config rate " + std::to_string(cfg.sample_rate) + " Hz");
  const std::size_t frames = num_frames(audio.samples.size(), cfg);
  if (frames == 0)
    throw InvalidArgument("compute_fbank: audio shorter than one frame (" +
                          std::to_string(audio.samples.size()) + " samples)");

  const std::size_t len = cfg.frame_length_samples();
  const std::size_t shift = cfg.frame_shift_samples();
  const std::size_t n = cfg.padded_fft_size();
  const auto bank = mel_filterbank(cfg);

  std::vector<double> window(len);
  for (std::size_t i = 0; i < len; ++i)
    window[i] = len > 1 ? 0.54 - 0.46 * std::cos(2.0 * std::numbers::pi * i / (len - 1)) : 1.0;

  FeatureMatrix out(std::move(utterance_id), frames, static_cast<std::size_t>(cfg.num_mel_bins));
  std::vector<double> frame(len);
  for (std::size_t t = 0; t < frames; ++t) {
    const float* src = audio.samples.data() + t * shift;
    for (std::size_t i = 0; i < len; ++i) frame[i] = src[i];
    if (cfg.preemphasis > 0.0) {
      for (std::size_t i = len - 1; i > 0; --i) frame[i] -= cfg.preemphasis * frame[i - 1];
      frame[0] -= cfg.preemphasis * frame[0];
    }
    for (std::size_t i = 0; i < len; ++i) frame[i] *= window[i];
    const auto power = power_spectrum(frame, n);
    for (std::size_t m = 0; m < bank.size(); ++m) {
      double e = 0.0;
      for (std::size_t k = 0; k < power.size(); ++k) e += bank[m][k] * power[k];
      out.at(t, m) = static_cast<float>(std::log(std::max(e, cfg.log_floor)));
    }
  }
  return out;
}

}  // namespace unspeech
