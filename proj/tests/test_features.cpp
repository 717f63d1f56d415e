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


#include <cmath>
#include <complex>
#include <fstream>
#include <random>

#include <gtest/gtest.h>

#include "test_util.hpp"

namespace unspeech {
namespace {

using testing::TempDir;

// Magnitude of the DTFT of `x` at `hz`, evaluated directly.
double dft_magnitude(const std::vector<float>& x, double hz, int rate) {
  std::complex<double> acc = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i)
    acc += static_cast<double>(x[i]) * std::polar(1.0, -2.0 * std::numbers::pi * hz * i / rate);
  return std::abs(acc);
}

TEST(Wav, FullScalePcm16) {
  TempDir dir;
  save_wav(dir.file("a.wav"), {std::vector<float>(100, 1.0f)}, 16000);
  const auto a = load_wav(dir.file("a.wav"));
  ASSERT_EQ(a.samples.size(), 100u);
  for (float v : a.samples) EXPECT_NEAR(v, 32767.0 / 32768.0, 1e-7);
}

TEST(Wav, OneSecondHeader) {
  TempDir dir;
  save_wav(dir.file("a.wav"), testing::sine(440.0, 16000));
  const auto a = load_wav(dir.file("a.wav"));
  EXPECT_EQ(a.samples.size(), 16000u);
  EXPECT_EQ(a.sample_rate, 16000);
  EXPECT_DOUBLE_EQ(a.duration(), 1.0);
}

TEST(Wav, StereoAntiphaseAveragesToZero) {
  TempDir dir;
  const auto x = testing::sine(300.0, 800).samples;
  std::vector<float> neg(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) neg[i] = -x[i];
  for (bool as_float : {false, true}) {
    save_wav(dir.file("s.wav"), {x, neg}, 16000, as_float);
    const auto a = load_wav(dir.file("s.wav"));
    ASSERT_EQ(a.samples.size(), x.size());
    for (float v : a.samples) EXPECT_EQ(v, 0.0f);
  }
}

TEST(Wav, FloatRoundTripIsExact) {
  TempDir dir;
  const auto x = testing::sine(1234.5, 1000);
  save_wav(dir.file("f.wav"), x, true);
  EXPECT_EQ(load_wav(dir.file("f.wav")).samples, x.samples);
}

TEST(Wav, ErrorsNameThePath) {
  TempDir dir;
  try {
    load_wav(dir.file("missing.wav"));
    FAIL();
  } catch (const Error& e) {
    EXPECT_NE(std::string(e.what()).find("missing.wav"), std::string::npos);
  }
  std::ofstream(dir.file("junk.wav")) << "RIFX0000WAVE";
  try {
    load_wav(dir.file("junk.wav"));
    FAIL();
  } catch (const FormatError& e) {
    EXPECT_NE(std::string(e.what()).find("junk.wav"), std::string::npos);
    EXPECT_NE(std::string(e.what()).find("RIFF"), std::string::npos);
  }
}

TEST(Fft, MatchesDirectDft) {
  Rng rng(3);
  std::normal_distribution<double> nd;
  std::vector<double> frame(400);
  for (auto& v : frame) v = nd(rng);
  const auto p = power_spectrum(frame, 512);
  ASSERT_EQ(p.size(), 257u);
  for (std::size_t k : {0u, 1u, 37u, 128u, 256u}) {
    std::complex<double> acc = 0.0;
    for (std::size_t i = 0; i < frame.size(); ++i)
      acc += frame[i] * std::polar(1.0, -2.0 * std::numbers::pi * double(k * i) / 512.0);
    EXPECT_NEAR(p[k], std::norm(acc), 1e-8 * std::max(1.0, std::norm(acc)));
  }
}

TEST(Fbank, FrameCountFormulaOverRandomLengths) {
  FbankConfig cfg;
  Rng rng(11);
  std::uniform_int_distribution<std::size_t> len(400, 20000);
  for (int i = 0; i < 50; ++i) {
    const std::size_t n = len(rng);
    const std::size_t expected = 1 + (n - 400) / 160;
    EXPECT_EQ(num_frames(n, cfg), expected);
    if (i < 5) {
      AudioBuffer a{std::vector<float>(n, 0.01f), 16000};
      EXPECT_EQ(compute_fbank(a, cfg).frames, expected);
    }
  }
  EXPECT_EQ(num_frames(16000, cfg), 98u);
  EXPECT_EQ(num_frames(399, cfg), 0u);
}

TEST(Fbank, SilenceHitsTheFloor) {
  FbankConfig cfg;
  const auto f = compute_fbank(AudioBuffer{std::vector<float>(4000, 0.0f), 16000}, cfg);
  for (float v : f.values) EXPECT_EQ(v, static_cast<float>(std::log(cfg.log_floor)));
}

TEST(Fbank, SineLandsInTheAnalyticMelBin) {
  FbankConfig cfg;
  // Centers of 40 filters evenly spaced on the mel scale between 0 and 8 kHz.
  const double top = 1127.0 * std::log(1.0 + 8000.0 / 700.0);
  const double target = 1127.0 * std::log(1.0 + 1000.0 / 700.0);
  const double step = top / 41.0;
  int expected = 0;
  for (int m = 1; m < 40; ++m)
    if (std::abs((m + 1) * step - target) < std::abs((expected + 1) * step - target)) expected = m;

  const auto f = compute_fbank(testing::sine(1000.0, 16000), cfg);
  std::vector<double> mean(f.bins, 0.0);
  for (std::size_t t = 0; t < f.frames; ++t)
    for (std::size_t m = 0; m < f.bins; ++m) mean[m] += f.at(t, m);
  const auto peak = std::max_element(mean.begin(), mean.end()) - mean.begin();
  EXPECT_EQ(peak, expected);
}

TEST(Fbank, LouderIsHigherEverywhere) {
  FbankConfig cfg;
  const auto quiet = compute_fbank(testing::sine(700.0, 4000, 16000, 0.1), cfg);
  const auto loud = compute_fbank(testing::sine(700.0, 4000, 16000, 0.4), cfg);
  for (std::size_t i = 0; i < quiet.values.size(); ++i)
    EXPECT_NEAR(loud.values[i] - quiet.values[i], std::log(16.0), 1e-3);
}

TEST(Fbank, Deterministic) {
  FbankConfig cfg;
  const auto a = testing::sine(321.0, 5000);
  EXPECT_EQ(compute_fbank(a, cfg).values, compute_fbank(a, cfg).values);
}

TEST(Fbank, RejectsBadConfigAndRateMismatch) {
  FbankConfig cfg;
  cfg.num_mel_bins = 1;
  EXPECT_THROW(cfg.validate(), InvalidArgument);
  FbankConfig ok;
  EXPECT_THROW(compute_fbank(testing::sine(100.0, 4000, 8000), ok), InvalidArgument);
  EXPECT_THROW(compute_fbank(AudioBuffer{std::vector<float>(100), 16000}, ok), InvalidArgument);
}

TEST(Fbank, FiltersPartitionTheMelAxis) {
  FbankConfig cfg;
  const auto bank = mel_filterbank(cfg);
  ASSERT_EQ(bank.size(), 40u);
  // Between the first and the last center, adjacent triangles sum to one.
  const double step = hz_to_mel(8000.0) / 41.0;
  for (std::size_t k = 0; k < bank[0].size(); ++k) {
    const double mel = hz_to_mel(k * 16000.0 / 512.0);
    if (mel < step || mel > 40 * step) continue;
    double s = 0.0;
    for (const auto& f : bank) s += f[k];
    EXPECT_NEAR(s, 1.0, 1e-9);
  }
}

TEST(SliceWindow, Bounds) {
  FeatureMatrix f("u", 100, 3);
  for (std::size_t i = 0; i < f.values.size(); ++i) f.values[i] = static_cast<float>(i);
  const auto whole = slice_window(f, 0, 100);
  EXPECT_EQ(whole.data, f.values.data());
  const auto mid = slice_window(f, 10, 50);
  EXPECT_EQ(mid.at(0, 0), f.at(10, 0));
  EXPECT_EQ(mid.at(49, 2), f.at(59, 2));
  EXPECT_THROW(slice_window(f, 60, 50), InvalidArgument);
}

TEST(SpeedPerturb, IdentityAtOne) {
  const auto a = testing::sine(500.0, 3000);
  EXPECT_EQ(speed_perturb(a, 1.0).samples, a.samples);
}

TEST(SpeedPerturb, LengthRatios) {
  Rng rng(5);
  std::uniform_int_distribution<std::size_t> len(1000, 40000);
  for (int i = 0; i < 20; ++i) {
    const std::size_t n = len(rng);
    AudioBuffer a{std::vector<float>(n, 0.0f), 16000};
    for (double f : {0.9, 1.1}) {
      const double expected = n / f;
      EXPECT_LE(std::abs(static_cast<double>(speed_perturb(a, f).samples.size()) - expected), 1.0);
    }
  }
  AudioBuffer a{std::vector<float>(16000, 0.0f), 16000};
  EXPECT_NEAR(static_cast<double>(speed_perturb(a, 0.9).samples.size()), 17778.0, 1.0);
}

TEST(SpeedPerturb, ScalesFrequency) {
  const auto out = speed_perturb(testing::sine(1000.0, 8000), 1.1);
  // Trim the edges where the interpolation kernel is truncated.
  std::vector<float> mid(out.samples.begin() + 200, out.samples.end() - 200);
  double best_hz = 0.0, best = -1.0;
  for (double hz = 900.0; hz <= 1300.0; hz += 5.0) {
    const double m = dft_magnitude(mid, hz, 16000);
    if (m > best) best = m, best_hz = hz;
  }
  EXPECT_NEAR(best_hz, 1100.0, 5.0);
}

TEST(SpeedPerturb, RejectsNonPositive) {
  EXPECT_THROW(speed_perturb(testing::sine(1.0, 10), 0.0), InvalidArgument);
}

}  // namespace
}  // namespace unspeech
