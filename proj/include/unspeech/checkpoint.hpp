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

#include <cstdint>
#include <fstream>
#include <sstream>
#include <string>

#include <nlohmann/json.hpp>

#include "unspeech/adam.hpp"
#include "unspeech/common.hpp"
#include "unspeech/model.hpp"

namespace unspeech {

// Layout (little-endian):
//   "UCKP" u32 version
//   u32 len + JSON {"arch": ..., "optim": ..., "meta": ...}
//   u64 seed, u64 trainer step, u64 optimizer step
//   u32 tensor count, per tensor: u16 name len, name, u32 rank, rank x u64 dims
//   parameter values, first moments, second moments: f32, tensor order
inline constexpr std::uint32_t kCheckpointVersion = 1;

struct Checkpoint {
  ArchitectureConfig arch;
  OptimizerConfig optim;
  nlohmann::json meta = nlohmann::json::object();  // trainer settings, free-form
  std::uint64_t seed = 0;
  std::uint64_t step = 0;
  ParamSet<float> params;
  AdamState<float> adam;

  SiameseModel<float> model() const {
    SiameseModel<float> m(arch);
    m.assign_params(params);
    return m;
  }
};

inline Checkpoint make_checkpoint(const SiameseModel<float>& model, const AdamState<float>& adam,
                                  const OptimizerConfig& optim, std::uint64_t seed, std::uint64_t step) {
  Checkpoint c;
  c.arch = model.arch();
  c.optim = optim;
  c.seed = seed;
  c.step = step;
  c.params = model.params();
  c.adam = adam;
  return c;
}

inline void save_checkpoint(const Checkpoint& ckpt, const std::string& path) {
  const auto& tensors = ckpt.params.tensors;
  if (ckpt.adam.m.tensors.size() != tensors.size() || ckpt.adam.v.tensors.size() != tensors.size())
    throw ShapeError("save_checkpoint: optimizer moments do not match parameters");
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(path + ": cannot open for writing");
  io::write_magic(out, "UCKP");
  io::write_pod(out, kCheckpointVersion);
  const std::string header = nlohmann::json{{"arch", ckpt.arch}, {"optim", ckpt.optim}, {"meta", ckpt.meta}}.dump();
  io::write_pod(out, static_cast<std::uint32_t>(header.size()));
  out.write(header.data(), static_cast<std::streamsize>(header.size()));
  io::write_pod(out, ckpt.seed);
  io::write_pod(out, ckpt.step);
  io::write_pod(out, ckpt.adam.step);
  io::write_pod(out, static_cast<std::uint32_t>(tensors.size()));
  for (const auto& t : tensors) {
    io::write_short_string(out, t.name);
    io::write_pod(out, static_cast<std::uint32_t>(t.shape.size()));
    for (auto d : t.shape) io::write_pod(out, static_cast<std::uint64_t>(d));
  }
  for (const auto* set : {&ckpt.params, &ckpt.adam.m, &ckpt.adam.v})
    for (std::size_t i = 0; i < tensors.size(); ++i) {
      const auto& t = set->tensors[i];
      if (t.size() != tensors[i].size()) throw ShapeError("save_checkpoint: moment size mismatch for '" + t.name + "'");
      io::write_array(out, t.data.data(), t.size());
    }
  out.close();
  if (!out) throw Error(path + ": write failed");
}

/// Reads a checkpoint and checks its tensor table against the architecture
/// stored in the header (or `expected`, when given).
inline Checkpoint load_checkpoint(const std::string& path, const ArchitectureConfig* expected = nullptr) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(path + ": cannot open checkpoint");
  io::expect_magic(in, "UCKP", path);
  const auto version = io::read_pod<std::uint32_t>(in, path + " header");
  if (version != kCheckpointVersion)
    throw FormatError(path + ": checkpoint version " + std::to_string(version) + ", expected " +
                      std::to_string(kCheckpointVersion));
  const auto hlen = io::read_pod<std::uint32_t>(in, path + " header");
  std::string header(hlen, '\0');
  io::read_exact(in, header.data(), hlen, path + " header");

  Checkpoint c;
  try {
    const auto j = nlohmann::json::parse(header);
    c.arch = j.at("arch").get<ArchitectureConfig>();
    c.optim = j.at("optim").get<OptimizerConfig>();
    c.meta = j.value("meta", nlohmann::json::object());
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(path + ": bad checkpoint header (" + e.what() + ")");
  }
  c.seed = io::read_pod<std::uint64_t>(in, path + " header");
  c.step = io::read_pod<std::uint64_t>(in, path + " header");
  c.adam.step = io::read_pod<std::uint64_t>(in, path + " header");

  const ArchitectureConfig& arch = expected ? *expected : c.arch;
  SiameseModel<float> layout_model(arch);
  const auto& layout = layout_model.params();

  const auto count = io::read_pod<std::uint32_t>(in, path + " tensor table");
  ParamSet<float> table;
  for (std::uint32_t i = 0; i < count; ++i) {
    auto name = io::read_short_string(in, path + " tensor table");
    const auto rank = io::read_pod<std::uint32_t>(in, path + " tensor table");
    if (rank > 8) throw FormatError(path + ": tensor '" + name + "' has implausible rank " + std::to_string(rank));
    std::vector<std::size_t> shape(rank);
    for (auto& d : shape) d = static_cast<std::size_t>(io::read_pod<std::uint64_t>(in, path + " tensor table"));
    table.add(std::move(name), std::move(shape), false);
  }
  for (std::size_t i = 0; i < std::max(table.tensors.size(), layout.tensors.size()); ++i) {
    if (i >= table.tensors.size())
      throw ShapeError(path + ": tensor '" + layout.tensors[i].name + "' required by the architecture is missing");
    if (i >= layout.tensors.size())
      throw ShapeError(path + ": tensor '" + table.tensors[i].name + "' is not part of the architecture");
    const auto& got = table.tensors[i];
    const auto& want = layout.tensors[i];
    if (got.name != want.name || got.shape != want.shape)
      throw ShapeError(path + ": tensor '" + got.name + "' " + SiameseModel<float>::shape_string(got.shape) +
                       " does not match architecture tensor '" + want.name + "' " +
                       SiameseModel<float>::shape_string(want.shape));
  }

  c.params = layout.zeros_like();
  c.adam.m = layout.zeros_like();
  c.adam.v = layout.zeros_like();
  for (auto* set : {&c.params, &c.adam.m, &c.adam.v})
    for (auto& t : set->tensors) io::read_array(in, t.data.data(), t.size(), path + " tensor '" + t.name + "'");
  if (!io::at_eof(in)) throw FormatError(path + ": trailing bytes after tensor data");
  if (expected) c.arch = *expected;
  return c;
}

}  // namespace unspeech
