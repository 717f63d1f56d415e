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
#include <cstdint>
#include <fstream>
#include <numbers>
#include <string>
#include <vector>

#include "unspeech/common.hpp"

namespace unspeech {

struct AudioBuffer {
  std::vector<float> samples;  // mono, nominally in [-1, 1]
  int sample_rate = 0;

  double duration() const {
    return sample_rate > 0 ? static_cast<double>(samples.size()) / sample_rate : 0.0;
  }
};

namespace detail {

constexpr std::uint16_t kWavPcm = 1;
constexpr std::uint16_t kWavFloat = 3;
constexpr std::uint16_t kWavExtensible = 0xFFFE;

}  // namespace detail

/// Reads a RIFF/WAVE file holding 16-bit PCM or 32-bit float samples.
/// Multi-channel input is averaged down to mono.
inline AudioBuffer load_wav(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(path + ": cannot open file");

  auto fail = [&](const std::string& field) -> FormatError {
    return FormatError(path + ": " + field);
  };
  char tag[4];
  in.read(tag, 4);
  if (in.gcount() != 4 || std::string_view(tag, 4) != "RIFF")
    throw fail("malformed RIFF header (missing \"RIFF\" tag)");
  io::read_pod<std::uint32_t>(in, "RIFF size");
  in.read(tag, 4);
  if (in.gcount() != 4 || std::string_view(tag, 4) != "WAVE")
    throw fail("malformed RIFF header (missing \"WAVE\" form type)");

  bool have_fmt = false;
  std::uint16_t format = 0, channels = 0, bits = 0;
  std::uint32_t rate = 0;
  std::vector<char> data;
  bool have_data = false;

  while (!have_data) {
    in.read(tag, 4);
    if (in.gcount() != 4) break;
    const auto size = io::read_pod<std::uint32_t>(in, path + " chunk size");
    const std::string_view id(tag, 4);
    if (id == "fmt ") {
      if (size < 16) throw fail("fmt chunk too small (" + std::to_string(size) + " bytes)");
      std::vector<char> fmt(size);
      io::read_exact(in, fmt.data(), size, path + " fmt chunk");
      std::memcpy(&format, fmt.data(), 2);
      std::memcpy(&channels, fmt.data() + 2, 2);
      std::memcpy(&rate, fmt.data() + 4, 4);
      std::memcpy(&bits, fmt.data() + 14, 2);
      if (format == detail::kWavExtensible) {
        if (size < 26) throw fail("extensible fmt chunk too small");
        std::memcpy(&format, fmt.data() + 24, 2);  // first two bytes of the subformat GUID
      }
      have_fmt = true;
    } else if (id == "data") {
      if (!have_fmt) throw fail("data chunk precedes fmt chunk");
      data.resize(size);
      in.read(data.data(), size);
      // Tolerate writers that leave the data size field wrong.
      data.resize(static_cast<std::size_t>(in.gcount()));
      have_data = true;
    } else {
      in.seekg(size + (size & 1u), std::ios::cur);
    }
    if (id == "fmt " && (size & 1u)) in.seekg(1, std::ios::cur);
  }
  if (!have_fmt) throw fail("missing fmt chunk");
  if (!have_data) throw fail("missing data chunk");
  if (channels == 0) throw fail("channel count is 0");
  if (rate == 0) throw fail("sample rate is 0");

  std::size_t bytes_per_sample = 0;
  if (format == detail::kWavPcm && bits == 16) {
    bytes_per_sample = 2;
  } else if (format == detail::kWavFloat && bits == 32) {
    bytes_per_sample = 4;
  } else {
    throw fail("unsupported codec (format tag " + std::to_string(format) + ", " +
               std::to_string(bits) + " bits per sample)");
  }

  const std::size_t frame_bytes = bytes_per_sample * channels;
  const std::size_t frames = data.size() / frame_bytes;
  AudioBuffer out;
  out.sample_rate = static_cast<int>(rate);
  out.samples.resize(frames);
  const char* p = data.data();
  for (std::size_t f = 0; f < frames; ++f) {
    double acc = 0.0;
    for (std::uint16_t c = 0; c < channels; ++c, p += bytes_per_sample) {
      if (bytes_per_sample == 2) {
        std::int16_t v;
        std::memcpy(&v, p, 2);
        acc += v / 32768.0;
      } else {
        float v;
        std::memcpy(&v, p, 4);
        if (!std::isfinite(v)) throw fail("non-finite sample at frame " + std::to_string(f));
        acc += v;
      }
    }
    out.samples[f] = static_cast<float>(acc / channels);
  }
  return out;
}

/// Writes interleaved channels as 16-bit PCM (`float_format` false) or
/// 32-bit float. `channels` holds one sample vector per channel.
inline void save_wav(const std::string& path,
                     const std::vector<std::vector<float>>& channels,
                     int sample_rate, bool float_format = false) {
  if (channels.empty()) throw InvalidArgument("save_wav: no channels");
  const std::size_t frames = channels.front().size();
  for (const auto& ch : channels)
    if (ch.size() != frames) throw InvalidArgument("save_wav: channel lengths differ");
  const auto nch = static_cast<std::uint16_t>(channels.size());
  const std::uint16_t bits = float_format ? 32 : 16;
  const std::uint32_t block = nch * bits / 8;
  const auto data_size = static_cast<std::uint32_t>(frames * block);

  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(path + ": cannot open for writing");
  io::write_magic(out, "RIFF");
  io::write_pod(out, static_cast<std::uint32_t>(36 + data_size));
  io::write_magic(out, "WAVEfmt ");
  io::write_pod(out, std::uint32_t{16});
  io::write_pod(out, float_format ? detail::kWavFloat : detail::kWavPcm);
  io::write_pod(out, nch);
  io::write_pod(out, static_cast<std::uint32_t>(sample_rate));
  io::write_pod(out, static_cast<std::uint32_t>(sample_rate) * block);
  io::write_pod(out, static_cast<std::uint16_t>(block));
  io::write_pod(out, bits);
  io::write_magic(out, "data");
  io::write_pod(out, data_size);
  for (std::size_t f = 0; f < frames; ++f) {
    for (const auto& ch : channels) {
      if (float_format) {
        io::write_pod(out, ch[f]);
      } else {
        const double v = std::clamp(static_cast<double>(ch[f]), -1.0, 32767.0 / 32768.0);
        io::write_pod(out, static_cast<std::int16_t>(std::lround(v * 32768.0)));
      }
    }
  }
  if (!out) throw Error(path + ": write failed");
}

inline void save_wav(const std::string& path, const AudioBuffer& audio,
                     bool float_format = false) {
  save_wav(path, std::vector<std::vector<float>>{audio.samples}, audio.sample_rate,
           float_format);
}

/// Changes playback speed by band-limited (windowed-sinc) resampling: the
/// output lasts duration/factor and every frequency is scaled by factor.
/// The sample rate is left untouched.
inline AudioBuffer speed_perturb(const AudioBuffer& audio, double factor) {
  if (!(factor > 0.0) || !std::isfinite(factor))
    throw InvalidArgument("speed_perturb: factor must be positive, got " + std::to_string(factor));
  if (factor == 1.0) return audio;

  constexpr int kZeroCrossings = 16;
  // Speeding up folds content above the new Nyquist; lower the cutoff.
  const double cutoff = std::min(1.0, 1.0 / factor) * 0.97;
  const double half_width = kZeroCrossings / cutoff;
  const auto n_in = static_cast<std::ptrdiff_t>(audio.samples.size());
  const auto n_out = static_cast<std::size_t>(std::llround(n_in / factor));

  AudioBuffer out;
  out.sample_rate = audio.sample_rate;
  out.samples.resize(n_out);
  for (std::size_t j = 0; j < n_out; ++j) {
    const double t = static_cast<double>(j) * factor;
    const auto lo = std::max<std::ptrdiff_t>(0, static_cast<std::ptrdiff_t>(std::ceil(t - half_width)));
    const auto hi = std::min<std::ptrdiff_t>(n_in - 1, static_cast<std::ptrdiff_t>(std::floor(t + half_width)));
    double acc = 0.0;
    for (auto i = lo; i <= hi; ++i) {
      const double x = static_cast<double>(i) - t;
      const double arg = cutoff * x;
      const double sinc = arg == 0.0 ? 1.0 : std::sin(std::numbers::pi * arg) / (std::numbers::pi * arg);
      // Hann taper over [-half_width, half_width].
      const double w = 0.5 + 0.5 * std::cos(std::numbers::pi * x / half_width);
      acc += audio.samples[static_cast<std::size_t>(i)] * cutoff * sinc * w;
    }
    out.samples[j] = static_cast<float>(acc);
  }
  return out;
}

}  // namespace unspeech
