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
#include <cstdint>
#include <fstream>
#include <map>
#include <optional>
#include <string>
#include <unordered_map>
#include <vector>

#include <nlohmann/json.hpp>

#include "unspeech/common.hpp"
#include "unspeech/fbank.hpp"

namespace unspeech {

struct ManifestEntry {
  std::string utterance_id;
  std::string audio_path;
  std::optional<std::string> speaker_id;
  std::optional<double> duration;
};

struct Manifest {
  std::vector<ManifestEntry> entries;

  std::size_t size() const { return entries.size(); }
  /// Speaker label per entry; throws if any entry has none.
  std::vector<std::string> speakers() const {
    std::vector<std::string> out;
    out.reserve(entries.size());
    for (const auto& e : entries) {
      if (!e.speaker_id) throw InvalidArgument("utterance '" + e.utterance_id + "' has no speaker label");
      out.push_back(*e.speaker_id);
    }
    return out;
  }
};

/// Parses JSON-lines text: one {"id", "path", ["speaker"], ["duration"]}
/// object per non-blank line. `source` names the input in errors.
inline Manifest parse_manifest_text(std::istream& in, const std::string& source) {
  Manifest m;
  std::unordered_map<std::string, std::size_t> first_line;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    auto where = [&] { return source + ":" + std::to_string(lineno) + ": "; };
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(line);
    } catch (const nlohmann::json::parse_error& e) {
      throw FormatError(where() + "malformed JSON (" + e.what() + ")");
    }
    if (!j.is_object()) throw FormatError(where() + "expected a JSON object");
    auto required = [&](const char* key) {
      if (!j.contains(key) || !j[key].is_string())
        throw FormatError(where() + "missing required string field \"" + key + "\"");
      return j[key].get<std::string>();
    };
    ManifestEntry e;
    e.utterance_id = required("id");
    e.audio_path = required("path");
    if (e.utterance_id.empty()) throw FormatError(where() + "empty \"id\"");
    if (e.audio_path.empty()) throw FormatError(where() + "empty \"path\"");
    if (j.contains("speaker") && !j["speaker"].is_null()) {
      if (!j["speaker"].is_string()) throw FormatError(where() + "\"speaker\" must be a string");
      e.speaker_id = j["speaker"].get<std::string>();
    }
    if (j.contains("duration") && !j["duration"].is_null()) {
      if (!j["duration"].is_number()) throw FormatError(where() + "\"duration\" must be a number");
      e.duration = j["duration"].get<double>();
    }
    if (auto [it, fresh] = first_line.emplace(e.utterance_id, lineno); !fresh)
      throw FormatError(source + ": duplicate id \"" + e.utterance_id + "\" on lines " +
                        std::to_string(it->second) + " and " + std::to_string(lineno));
    m.entries.push_back(std::move(e));
  }
  return m;
}

inline Manifest parse_manifest(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error(path + ": cannot open manifest");
  return parse_manifest_text(in, path);
}

inline void write_manifest(const Manifest& m, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw Error(path + ": cannot open for writing");
  for (const auto& e : m.entries) {
    nlohmann::json j{{"id", e.utterance_id}, {"path", e.audio_path}};
    if (e.speaker_id) j["speaker"] = *e.speaker_id;
    if (e.duration) j["duration"] = *e.duration;
    out << j.dump() << '\n';
  }
}

// ---------------------------------------------------------------------------
// Feature store: "UFBK" u32 version u32 num_mel_bins, then records of
// u16 id length, id bytes, u32 frame count, frames*bins f32 (time-major),
// until end of file.

inline constexpr std::uint32_t kFeatureStoreVersion = 1;

class FeatureStoreWriter {
 public:
  FeatureStoreWriter(const std::string& path, std::size_t num_mel_bins)
      : path_(path), bins_(num_mel_bins), out_(path, std::ios::binary) {
    if (!out_) throw Error(path + ": cannot open for writing");
    io::write_magic(out_, "UFBK");
    io::write_pod(out_, kFeatureStoreVersion);
    io::write_pod(out_, static_cast<std::uint32_t>(bins_));
  }

  void append(const FeatureMatrix& f) {
    if (f.bins != bins_)
      throw ShapeError(path_ + ": record '" + f.utterance_id + "' has " + std::to_string(f.bins) +
                       " bins, store has " + std::to_string(bins_));
    io::write_short_string(out_, f.utterance_id);
    io::write_pod(out_, static_cast<std::uint32_t>(f.frames));
    io::write_array(out_, f.values.data(), f.values.size());
    if (!out_) throw Error(path_ + ": write failed");
  }

  void close() {
    out_.close();
    if (!out_) throw Error(path_ + ": write failed");
  }

 private:
  std::string path_;
  std::size_t bins_;
  std::ofstream out_;
};

inline void write_feature_store(const std::string& path, const std::vector<FeatureMatrix>& feats,
                                std::size_t num_mel_bins) {
  FeatureStoreWriter w(path, num_mel_bins);
  for (const auto& f : feats) w.append(f);
  w.close();
}

inline std::vector<FeatureMatrix> read_feature_store(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(path + ": cannot open feature store");
  io::expect_magic(in, "UFBK", path);
  const auto version = io::read_pod<std::uint32_t>(in, path + " header");
  if (version != kFeatureStoreVersion)
    throw FormatError(path + ": unsupported feature store version " + std::to_string(version));
  const auto bins = io::read_pod<std::uint32_t>(in, path + " header");
  if (bins == 0) throw FormatError(path + ": num_mel_bins is 0");
  std::vector<FeatureMatrix> out;
  while (!io::at_eof(in)) {
    auto id = io::read_short_string(in, path + " record id");
    const auto frames = io::read_pod<std::uint32_t>(in, path + " record '" + id + "'");
    FeatureMatrix f(id, frames, bins);
    io::read_array(in, f.values.data(), f.values.size(), path + " record '" + id + "'");
    out.push_back(std::move(f));
  }
  return out;
}

// ---------------------------------------------------------------------------

/// Utterances available for sampling, in manifest order. Speaker labels are
/// deliberately absent.
struct Corpus {
  std::vector<FeatureMatrix> utterances;
  std::size_t total_frames = 0;
  std::size_t window_width = 0;
  std::size_t dropped = 0;  // utterances shorter than window_width

  std::size_t size() const { return utterances.size(); }
  bool empty() const { return utterances.empty(); }
  std::size_t bins() const { return utterances.empty() ? 0 : utterances.front().bins; }
};

/// Keeps the utterances with at least `window_width` frames.
inline Corpus make_corpus(std::vector<FeatureMatrix> features, std::size_t window_width) {
  if (window_width == 0) throw InvalidArgument("window_width must be >= 1");
  Corpus c;
  c.window_width = window_width;
  for (auto& f : features) {
    if (f.frames < window_width) {
      ++c.dropped;
      continue;
    }
    if (!c.utterances.empty() && f.bins != c.utterances.front().bins)
      throw ShapeError("utterance '" + f.utterance_id + "' has " + std::to_string(f.bins) +
                       " bins, expected " + std::to_string(c.utterances.front().bins));
    c.total_frames += f.frames;
    c.utterances.push_back(std::move(f));
  }
  return c;
}

/// Looks up every manifest id in `store`, in manifest order.
inline std::vector<FeatureMatrix> select_features(const Manifest& manifest,
                                                  std::vector<FeatureMatrix> store,
                                                  const std::string& store_name) {
  std::unordered_map<std::string, std::size_t> index;
  for (std::size_t i = 0; i < store.size(); ++i) index.emplace(store[i].utterance_id, i);
  std::vector<FeatureMatrix> out;
  out.reserve(manifest.size());
  for (const auto& e : manifest.entries) {
    auto it = index.find(e.utterance_id);
    if (it == index.end())
      throw Error(store_name + ": utterance \"" + e.utterance_id + "\" from the manifest is missing");
    out.push_back(std::move(store[it->second]));
  }
  return out;
}

inline Corpus load_corpus(const Manifest& manifest, const std::string& feature_store_path,
                          std::size_t window_width) {
  return make_corpus(select_features(manifest, read_feature_store(feature_store_path),
                                     feature_store_path),
                     window_width);
}

// ---------------------------------------------------------------------------
// Embedding store: "UEMB" u32 version u32 dim u64 count, then per record u16
// id length, id bytes, dim f32.

inline constexpr std::uint32_t kEmbeddingStoreVersion = 1;

struct EmbeddingRecord {
  std::string utterance_id;
  std::vector<float> vector;

  bool operator==(const EmbeddingRecord&) const = default;
};

struct EmbeddingStore {
  std::size_t dim = 0;
  std::vector<EmbeddingRecord> records;

  bool operator==(const EmbeddingStore&) const = default;

  void add(std::string id, std::vector<float> v) {
    if (v.size() != dim)
      throw ShapeError("embedding '" + id + "' has dim " + std::to_string(v.size()) +
                       ", store dim is " + std::to_string(dim));
    records.push_back({std::move(id), std::move(v)});
  }
};

inline void write_embeddings(const EmbeddingStore& store, const std::string& path) {
  if (store.dim == 0) throw InvalidArgument("write_embeddings: dim must be > 0");
  for (const auto& r : store.records) {
    if (r.vector.size() != store.dim)
      throw ShapeError("write_embeddings: record '" + r.utterance_id + "' has dim " +
                       std::to_string(r.vector.size()) + ", expected " + std::to_string(store.dim));
    for (float v : r.vector)
      if (!std::isfinite(v))
        throw InvalidArgument("write_embeddings: record '" + r.utterance_id + "' is not finite");
  }
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(path + ": cannot open for writing");
  io::write_magic(out, "UEMB");
  io::write_pod(out, kEmbeddingStoreVersion);
  io::write_pod(out, static_cast<std::uint32_t>(store.dim));
  io::write_pod(out, static_cast<std::uint64_t>(store.records.size()));
  for (const auto& r : store.records) {
    io::write_short_string(out, r.utterance_id);
    io::write_array(out, r.vector.data(), r.vector.size());
  }
  out.close();
  if (!out) throw Error(path + ": write failed");
}

inline EmbeddingStore read_embeddings(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(path + ": cannot open embedding store");
  io::expect_magic(in, "UEMB", path);
  const auto version = io::read_pod<std::uint32_t>(in, path + " header");
  if (version != kEmbeddingStoreVersion)
    throw FormatError(path + ": unsupported embedding store version " + std::to_string(version));
  EmbeddingStore s;
  s.dim = io::read_pod<std::uint32_t>(in, path + " header");
  if (s.dim == 0) throw FormatError(path + ": dim is 0");
  const auto count = io::read_pod<std::uint64_t>(in, path + " header");
  for (std::uint64_t i = 0; i < count; ++i) {
    EmbeddingRecord r;
    r.utterance_id = io::read_short_string(in, path + " record " + std::to_string(i));
    r.vector.resize(s.dim);
    io::read_array(in, r.vector.data(), s.dim, path + " record '" + r.utterance_id + "'");
    s.records.push_back(std::move(r));
  }
  if (!io::at_eof(in)) throw FormatError(path + ": trailing bytes after " + std::to_string(count) + " records");
  return s;
}

}  // namespace unspeech
