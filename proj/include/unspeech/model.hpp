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
#include <limits>
#include <random>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "unspeech/common.hpp"
#include "unspeech/fbank.hpp"

namespace unspeech {

/// One VGG-style stage: `layers` 3x3 same-padded convolutions with
/// `channels` outputs each, followed by a 2x2 max-pool.
struct ConvStage {
  std::size_t layers = 1;
  std::size_t channels = 8;

  bool operator==(const ConvStage&) const = default;
};

struct ArchitectureConfig {
  std::size_t input_width = 64;  // frames
  std::size_t input_bins = 40;   // mel bins
  std::vector<ConvStage> conv_stages{{1, 8}, {1, 16}, {1, 32}};
  std::vector<std::size_t> fc_widths{128, 100};  // last entry is the embedding dimension
  double leaky_relu_slope = 0.01;
  double dropout_p = 0.1;

  bool operator==(const ArchitectureConfig&) const = default;

  std::size_t embedding_dim() const { return fc_widths.empty() ? 0 : fc_widths.back(); }

  /// Height/width after all pooling stages.
  std::pair<std::size_t, std::size_t> pooled_extent() const {
    std::size_t h = input_width, w = input_bins;
    for (std::size_t s = 0; s < conv_stages.size(); ++s) h /= 2, w /= 2;
    return {h, w};
  }

  std::size_t flat_features() const {
    auto [h, w] = pooled_extent();
    const std::size_t c = conv_stages.empty() ? 1 : conv_stages.back().channels;
    return c * h * w;
  }

  void validate() const {
    auto bad = [](const std::string& m) { return InvalidArgument("ArchitectureConfig: " + m); };
    if (input_width == 0 || input_bins == 0) throw bad("input shape must be non-empty");
    if (fc_widths.empty() || embedding_dim() < 1) throw bad("fc head must end in embedding_dim >= 1");
    for (auto w : fc_widths)
      if (w == 0) throw bad("fc layer width must be >= 1");
    std::size_t h = input_width, w = input_bins;
    for (std::size_t s = 0; s < conv_stages.size(); ++s) {
      if (conv_stages[s].layers == 0 || conv_stages[s].channels == 0)
        throw bad("conv stage " + std::to_string(s) + " is empty");
      h /= 2, w /= 2;
      if (h == 0 || w == 0)
        throw bad("pooling after stage " + std::to_string(s) + " reduces a spatial dim below 1");
    }
    if (!(leaky_relu_slope >= 0.0 && leaky_relu_slope < 1.0)) throw bad("leaky_relu_slope must be in [0, 1)");
    if (!(dropout_p >= 0.0 && dropout_p < 1.0)) throw bad("dropout_p must be in [0, 1)");
  }

  /// Desk-scale VGG-A-style stack used by default.
  static ArchitectureConfig small(std::size_t width = 64, std::size_t bins = 40) {
    ArchitectureConfig a;
    a.input_width = width;
    a.input_bins = bins;
    return a;
  }

  /// VGG configuration A (8 conv + 3 fc layers), fc widths scaled to the
  /// embedding dimension.
  static ArchitectureConfig vgg_a(std::size_t width = 64, std::size_t bins = 40,
                                  std::size_t embedding_dim = 100) {
    ArchitectureConfig a;
    a.input_width = width;
    a.input_bins = bins;
    a.conv_stages = {{1, 64}, {1, 128}, {2, 256}, {2, 512}, {2, 512}};
    a.fc_widths = {4096, 4096, embedding_dim};
    return a;
  }
};

inline void to_json(nlohmann::json& j, const ConvStage& s) {
  j = {{"layers", s.layers}, {"channels", s.channels}};
}
inline void from_json(const nlohmann::json& j, ConvStage& s) {
  j.at("layers").get_to(s.layers);
  j.at("channels").get_to(s.channels);
}
inline void to_json(nlohmann::json& j, const ArchitectureConfig& a) {
  j = {{"input_width", a.input_width}, {"input_bins", a.input_bins},
       {"conv_stages", a.conv_stages}, {"fc_widths", a.fc_widths},
       {"leaky_relu_slope", a.leaky_relu_slope}, {"dropout_p", a.dropout_p}};
}
inline void from_json(const nlohmann::json& j, ArchitectureConfig& a) {
  ArchitectureConfig d;
  a.input_width = j.value("input_width", d.input_width);
  a.input_bins = j.value("input_bins", d.input_bins);
  a.conv_stages = j.value("conv_stages", d.conv_stages);
  a.fc_widths = j.value("fc_widths", d.fc_widths);
  a.leaky_relu_slope = j.value("leaky_relu_slope", d.leaky_relu_slope);
  a.dropout_p = j.value("dropout_p", d.dropout_p);
}

// ---------------------------------------------------------------------------

template <typename T>
struct Tensor {
  std::string name;
  std::vector<std::size_t> shape;
  std::vector<T> data;
  bool decay = false;  // subject to L2 regularization

  std::size_t size() const { return data.size(); }
};

/// Flat list of named tensors. Gradients and optimizer moments reuse the
/// layout of the parameters they belong to.
template <typename T>
struct ParamSet {
  std::vector<Tensor<T>> tensors;

  std::size_t add(std::string name, std::vector<std::size_t> shape, bool decay) {
    std::size_t n = 1;
    for (auto d : shape) n *= d;
    tensors.push_back({std::move(name), std::move(shape), std::vector<T>(n, T(0)), decay});
    return tensors.size() - 1;
  }

  ParamSet zeros_like() const {
    ParamSet z;
    z.tensors.reserve(tensors.size());
    for (const auto& t : tensors) z.tensors.push_back({t.name, t.shape, std::vector<T>(t.size(), T(0)), t.decay});
    return z;
  }

  void fill_zero() {
    for (auto& t : tensors) std::fill(t.data.begin(), t.data.end(), T(0));
  }

  std::size_t num_values() const {
    std::size_t n = 0;
    for (const auto& t : tensors) n += t.size();
    return n;
  }

  const Tensor<T>* find(const std::string& name) const {
    for (const auto& t : tensors)
      if (t.name == name) return &t;
    return nullptr;
  }

  template <typename U>
  ParamSet<U> cast() const {
    ParamSet<U> out;
    for (const auto& t : tensors)
      out.tensors.push_back({t.name, t.shape, std::vector<U>(t.data.begin(), t.data.end()), t.decay});
    return out;
  }

  void add_scaled(const ParamSet& other, T scale) {
    for (std::size_t i = 0; i < tensors.size(); ++i)
      for (std::size_t j = 0; j < tensors[i].size(); ++j) tensors[i].data[j] += scale * other.tensors[i].data[j];
  }

  bool all_finite() const {
    for (const auto& t : tensors)
      for (T v : t.data)
        if (!std::isfinite(v)) return false;
    return true;
  }
};

enum class Head { kTarget, kContext };
enum class Mode { kTrain, kEval };

/// Intermediates of one window's forward pass, kept for backward.
template <typename T>
struct WindowTrace {
  Head head = Head::kTarget;
  std::vector<T> input;                          // C=1 x width x bins
  std::vector<std::vector<T>> conv_out;          // post-activation, per conv layer
  std::vector<std::vector<T>> pooled;            // per stage, output of the max-pool
  std::vector<std::vector<std::uint32_t>> pool_argmax;  // per stage, index into the pool input
  std::vector<T> conv_features;                  // flattened output of the conv stack
  std::vector<std::vector<T>> fc_in;             // per fc layer, after dropout
  std::vector<std::vector<std::uint8_t>> dropout_keep;  // per fc layer; empty when inactive
  std::vector<std::vector<T>> fc_out;            // per fc layer; last one is the embedding

  const std::vector<T>& embedding() const { return fc_out.back(); }
};

/// Shared conv stack with separate target and context fully connected heads
/// and a trained logit scale alpha.
template <typename T>
class SiameseModel {
 public:
  struct ConvLayer {
    std::size_t in_c, out_c, height, width;
    std::size_t stage;
    bool first_in_stage;
    std::size_t weight, bias;  // tensor indices
  };
  struct FcLayer {
    std::size_t in, out;
    std::size_t weight, bias;
  };

  SiameseModel() = default;

  explicit SiameseModel(ArchitectureConfig arch) : arch_(std::move(arch)) {
    arch_.validate();
    build_layout();
  }

  /// He-style fan-in initialization (final layer scaled down), zero biases,
  /// alpha = 1.
  SiameseModel(ArchitectureConfig arch, std::uint64_t seed) : SiameseModel(std::move(arch)) {
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> normal(0.0, 1.0);
    for (const auto& l : conv_) {
      const double std = std::sqrt(2.0 / static_cast<double>(l.in_c * 9));
      for (auto& v : params_.tensors[l.weight].data) v = static_cast<T>(normal(rng) * std);
    }
    for (const auto* head : {&fc_target_, &fc_context_}) {
      for (std::size_t j = 0; j < head->size(); ++j) {
        const auto& l = (*head)[j];
        const bool last = j + 1 == head->size();
        // The final layer is linear; its extra 1/sqrt(out) keeps the initial
        // dot products, and so the logits, of order one.
        const double std = last ? std::sqrt(1.0 / static_cast<double>(l.in * l.out))
                                : std::sqrt(2.0 / static_cast<double>(l.in));
        for (auto& v : params_.tensors[l.weight].data) v = static_cast<T>(normal(rng) * std);
      }
    }
    params_.tensors[alpha_].data[0] = T(1);
  }

  const ArchitectureConfig& arch() const { return arch_; }
  ParamSet<T>& params() { return params_; }
  const ParamSet<T>& params() const { return params_; }
  T alpha() const { return params_.tensors[alpha_].data[0]; }
  void set_alpha(T a) { params_.tensors[alpha_].data[0] = a; }
  std::size_t alpha_index() const { return alpha_; }
  const std::vector<ConvLayer>& conv_layers() const { return conv_; }
  const std::vector<FcLayer>& fc_layers(Head h) const { return h == Head::kTarget ? fc_target_ : fc_context_; }

  /// Replaces every parameter tensor; names and shapes must match the layout.
  void assign_params(const ParamSet<T>& p) {
    if (p.tensors.size() != params_.tensors.size())
      throw ShapeError("parameter table has " + std::to_string(p.tensors.size()) + " tensors, architecture needs " +
                       std::to_string(params_.tensors.size()));
    for (std::size_t i = 0; i < p.tensors.size(); ++i) {
      const auto& want = params_.tensors[i];
      const auto& got = p.tensors[i];
      if (got.name != want.name || got.shape != want.shape)
        throw ShapeError("tensor '" + got.name + "' does not match architecture tensor '" + want.name +
                         "' (" + shape_string(got.shape) + " vs " + shape_string(want.shape) + ")");
    }
    for (std::size_t i = 0; i < p.tensors.size(); ++i) params_.tensors[i].data = p.tensors[i].data;
  }

  static std::string shape_string(const std::vector<std::size_t>& s) {
    std::string out = "[";
    for (std::size_t i = 0; i < s.size(); ++i) out += (i ? "x" : "") + std::to_string(s[i]);
    return out + "]";
  }

  /// Forward pass of one window through the conv stack and the given head.
  /// Train mode applies inverted dropout to every fc layer input using `rng`.
  template <typename Engine = std::mt19937_64>
  WindowTrace<T> forward(const WindowView& window, Head head, Mode mode, Engine* rng = nullptr) const {
    if (window.width != arch_.input_width || window.bins != arch_.input_bins)
      throw ShapeError("window " + std::to_string(window.width) + "x" + std::to_string(window.bins) +
                       " does not match model input " + std::to_string(arch_.input_width) + "x" +
                       std::to_string(arch_.input_bins));
    const bool dropout = mode == Mode::kTrain && arch_.dropout_p > 0.0;
    if (dropout && rng == nullptr) throw InvalidArgument("train-mode forward needs a dropout rng");

    WindowTrace<T> tr;
    tr.head = head;
    tr.input.assign(window.data, window.data + window.width * window.bins);

    // `cur` points into these vectors, so they must never reallocate.
    tr.conv_out.reserve(conv_.size());
    tr.pooled.reserve(arch_.conv_stages.size());
    const std::vector<T>* cur = &tr.input;
    std::size_t layer = 0;
    for (std::size_t s = 0; s < arch_.conv_stages.size(); ++s) {
      for (std::size_t k = 0; k < arch_.conv_stages[s].layers; ++k, ++layer) {
        const auto& l = conv_[layer];
        tr.conv_out.emplace_back(l.out_c * l.height * l.width);
        conv_forward(l, *cur, tr.conv_out.back());
        leaky_relu_inplace(tr.conv_out.back());
        cur = &tr.conv_out.back();
      }
      const auto& last = conv_[layer - 1];
      tr.pooled.emplace_back();
      tr.pool_argmax.emplace_back();
      maxpool_forward(*cur, last.out_c, last.height, last.width, tr.pooled.back(), tr.pool_argmax.back());
      cur = &tr.pooled.back();
    }
    tr.conv_features = *cur;

    const auto& fcs = fc_layers(head);
    const std::vector<T>* x = &tr.conv_features;
    tr.fc_in.reserve(fcs.size());
    tr.fc_out.reserve(fcs.size());
    tr.dropout_keep.reserve(fcs.size());
    const T scale = dropout ? T(1.0 / (1.0 - arch_.dropout_p)) : T(1);
    for (std::size_t j = 0; j < fcs.size(); ++j) {
      const auto& l = fcs[j];
      tr.fc_in.push_back(*x);
      auto& in = tr.fc_in.back();
      tr.dropout_keep.emplace_back();
      if (dropout) {
        auto& keep = tr.dropout_keep.back();
        keep.resize(in.size());
        for (std::size_t i = 0; i < in.size(); ++i) {
          const double u = static_cast<double>((*rng)() >> 11) * 0x1.0p-53;
          keep[i] = u >= arch_.dropout_p;
          in[i] = keep[i] ? in[i] * scale : T(0);
        }
      }
      tr.fc_out.emplace_back(l.out);
      auto& out = tr.fc_out.back();
      const T* w = params_.tensors[l.weight].data.data();
      const T* b = params_.tensors[l.bias].data.data();
      for (std::size_t o = 0; o < l.out; ++o) {
        T acc = b[o];
        const T* row = w + o * l.in;
        for (std::size_t i = 0; i < l.in; ++i) acc += row[i] * in[i];
        out[o] = acc;
      }
      if (j + 1 < fcs.size()) leaky_relu_inplace(out);
      x = &out;
    }
    return tr;
  }

  std::vector<T> embed(const WindowView& window, Head head) const {
    return forward(window, head, Mode::kEval).fc_out.back();
  }

  /// Accumulates into `grads` the gradient of a scalar objective whose
  /// derivative with respect to this trace's embedding is `d_embedding`.
  void backward(const WindowTrace<T>& tr, std::span<const T> d_embedding, ParamSet<T>& grads) const {
    const auto& fcs = fc_layers(tr.head);
    if (tr.fc_out.size() != fcs.size() || tr.conv_out.size() != conv_.size())
      throw InvalidArgument("backward: trace is missing intermediates");
    if (d_embedding.size() != arch_.embedding_dim()) throw ShapeError("backward: gradient has wrong dimension");

    std::vector<T> grad(d_embedding.begin(), d_embedding.end());
    const T slope = static_cast<T>(arch_.leaky_relu_slope);
    const T scale = T(1.0 / (1.0 - arch_.dropout_p));
    for (std::size_t jj = fcs.size(); jj-- > 0;) {
      const auto& l = fcs[jj];
      if (jj + 1 < fcs.size()) {
        const auto& out = tr.fc_out[jj];
        for (std::size_t o = 0; o < l.out; ++o)
          if (!(out[o] > T(0))) grad[o] *= slope;
      }
      const auto& in = tr.fc_in[jj];
      T* gw = grads.tensors[l.weight].data.data();
      T* gb = grads.tensors[l.bias].data.data();
      const T* w = params_.tensors[l.weight].data.data();
      std::vector<T> gin(l.in, T(0));
      for (std::size_t o = 0; o < l.out; ++o) {
        const T g = grad[o];
        gb[o] += g;
        if (g == T(0)) continue;
        T* gwrow = gw + o * l.in;
        const T* wrow = w + o * l.in;
        for (std::size_t i = 0; i < l.in; ++i) {
          gwrow[i] += g * in[i];
          gin[i] += g * wrow[i];
        }
      }
      const auto& keep = tr.dropout_keep[jj];
      if (!keep.empty())
        for (std::size_t i = 0; i < l.in; ++i) gin[i] = keep[i] ? gin[i] * scale : T(0);
      grad = std::move(gin);
    }

    // grad now refers to conv_features.
    std::size_t layer = conv_.size();
    for (std::size_t s = arch_.conv_stages.size(); s-- > 0;) {
      const auto& last = conv_[layer - 1];
      std::vector<T> unpooled(last.out_c * last.height * last.width, T(0));
      const auto& idx = tr.pool_argmax[s];
      for (std::size_t i = 0; i < idx.size(); ++i) unpooled[idx[i]] += grad[i];
      grad = std::move(unpooled);
      for (std::size_t k = arch_.conv_stages[s].layers; k-- > 0;) {
        --layer;
        const auto& l = conv_[layer];
        const auto& out = tr.conv_out[layer];
        for (std::size_t i = 0; i < grad.size(); ++i)
          if (!(out[i] > T(0))) grad[i] *= slope;
        const std::vector<T>& input = conv_input(tr, layer);
        std::vector<T> gin;
        conv_backward(l, input, grad, grads, layer > 0 ? &gin : nullptr);
        grad = std::move(gin);
      }
    }
  }

 private:
  void build_layout() {
    params_ = {};
    conv_.clear();
    fc_target_.clear();
    fc_context_.clear();
    std::size_t c = 1, h = arch_.input_width, w = arch_.input_bins, n = 0;
    for (std::size_t s = 0; s < arch_.conv_stages.size(); ++s) {
      const auto& stage = arch_.conv_stages[s];
      for (std::size_t k = 0; k < stage.layers; ++k, ++n) {
        ConvLayer l{c, stage.channels, h, w, s, k == 0, 0, 0};
        l.weight = params_.add("conv" + std::to_string(n) + ".weight", {stage.channels, c, 3, 3}, true);
        l.bias = params_.add("conv" + std::to_string(n) + ".bias", {stage.channels}, false);
        conv_.push_back(l);
        c = stage.channels;
      }
      h /= 2, w /= 2;
    }
    for (auto [head, prefix] : {std::pair{&fc_target_, "fc_target"}, std::pair{&fc_context_, "fc_context"}}) {
      std::size_t in = arch_.flat_features();
      for (std::size_t j = 0; j < arch_.fc_widths.size(); ++j) {
        const std::size_t out = arch_.fc_widths[j];
        FcLayer l{in, out, 0, 0};
        l.weight = params_.add(std::string(prefix) + std::to_string(j) + ".weight", {out, in}, true);
        l.bias = params_.add(std::string(prefix) + std::to_string(j) + ".bias", {out}, false);
        head->push_back(l);
        in = out;
      }
    }
    alpha_ = params_.add("alpha", {1}, false);
  }

  void leaky_relu_inplace(std::vector<T>& v) const {
    const T slope = static_cast<T>(arch_.leaky_relu_slope);
    for (auto& x : v)
      if (!(x > T(0))) x *= slope;
  }

  void conv_forward(const ConvLayer& l, const std::vector<T>& in, std::vector<T>& out) const {
    const std::size_t H = l.height, W = l.width, plane = H * W;
    const T* w = params_.tensors[l.weight].data.data();
    const T* b = params_.tensors[l.bias].data.data();
    for (std::size_t o = 0; o < l.out_c; ++o) {
      T* dst = out.data() + o * plane;
      std::fill(dst, dst + plane, b[o]);
      for (std::size_t i = 0; i < l.in_c; ++i) {
        const T* src = in.data() + i * plane;
        const T* k = w + (o * l.in_c + i) * 9;
        for (int ky = 0; ky < 3; ++ky) {
          const int dy = ky - 1;
          const std::size_t y0 = dy < 0 ? 1 : 0, y1 = dy > 0 ? H - 1 : H;
          for (int kx = 0; kx < 3; ++kx) {
            const int dx = kx - 1;
            const std::size_t x0 = dx < 0 ? 1 : 0, x1 = dx > 0 ? W - 1 : W;
            const T kv = k[ky * 3 + kx];
            for (std::size_t y = y0; y < y1; ++y) {
              T* drow = dst + y * W;
              const T* srow = src + (y + dy) * W + dx;
              for (std::size_t x = x0; x < x1; ++x) drow[x] += kv * srow[x];
            }
          }
        }
      }
    }
  }

  void conv_backward(const ConvLayer& l, const std::vector<T>& in, const std::vector<T>& gout,
                     ParamSet<T>& grads, std::vector<T>* gin) const {
    const std::size_t H = l.height, W = l.width, plane = H * W;
    const T* w = params_.tensors[l.weight].data.data();
    T* gw = grads.tensors[l.weight].data.data();
    T* gb = grads.tensors[l.bias].data.data();
    if (gin) gin->assign(l.in_c * plane, T(0));
    for (std::size_t o = 0; o < l.out_c; ++o) {
      const T* g = gout.data() + o * plane;
      T sum = T(0);
      for (std::size_t p = 0; p < plane; ++p) sum += g[p];
      gb[o] += sum;
      for (std::size_t i = 0; i < l.in_c; ++i) {
        const T* src = in.data() + i * plane;
        T* gsrc = gin ? gin->data() + i * plane : nullptr;
        const std::size_t kidx = (o * l.in_c + i) * 9;
        for (int ky = 0; ky < 3; ++ky) {
          const int dy = ky - 1;
          const std::size_t y0 = dy < 0 ? 1 : 0, y1 = dy > 0 ? H - 1 : H;
          for (int kx = 0; kx < 3; ++kx) {
            const int dx = kx - 1;
            const std::size_t x0 = dx < 0 ? 1 : 0, x1 = dx > 0 ? W - 1 : W;
            const T kv = w[kidx + ky * 3 + kx];
            T acc = T(0);
            for (std::size_t y = y0; y < y1; ++y) {
              const T* grow = g + y * W;
              const T* srow = src + (y + dy) * W + dx;
              for (std::size_t x = x0; x < x1; ++x) acc += grow[x] * srow[x];
              if (gsrc) {
                T* girow = gsrc + (y + dy) * W + dx;
                for (std::size_t x = x0; x < x1; ++x) girow[x] += kv * grow[x];
              }
            }
            gw[kidx + ky * 3 + kx] += acc;
          }
        }
      }
    }
  }

  static void maxpool_forward(const std::vector<T>& in, std::size_t C, std::size_t H, std::size_t W,
                              std::vector<T>& out, std::vector<std::uint32_t>& argmax) {
    const std::size_t oh = H / 2, ow = W / 2;
    out.resize(C * oh * ow);
    argmax.resize(out.size());
    for (std::size_t c = 0; c < C; ++c)
      for (std::size_t y = 0; y < oh; ++y)
        for (std::size_t x = 0; x < ow; ++x) {
          std::size_t best = c * H * W + (2 * y) * W + 2 * x;
          for (std::size_t dy = 0; dy < 2; ++dy)
            for (std::size_t dx = 0; dx < 2; ++dx) {
              const std::size_t idx = c * H * W + (2 * y + dy) * W + 2 * x + dx;
              if (in[idx] > in[best]) best = idx;
            }
          const std::size_t o = (c * oh + y) * ow + x;
          out[o] = in[best];
          argmax[o] = static_cast<std::uint32_t>(best);
        }
  }

  // Input of conv layer `layer`: the raw window, the previous conv output
  // (inside a stage) or the pooled output of the previous stage.
  const std::vector<T>& conv_input(const WindowTrace<T>& tr, std::size_t layer) const {
    if (layer == 0) return tr.input;
    const auto& l = conv_[layer];
    if (l.first_in_stage) return tr.pooled[l.stage - 1];
    return tr.conv_out[layer - 1];
  }

  ArchitectureConfig arch_;
  ParamSet<T> params_;
  std::vector<ConvLayer> conv_;
  std::vector<FcLayer> fc_target_, fc_context_;
  std::size_t alpha_ = 0;
};

}  // namespace unspeech
