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
#include <string>

#include <nlohmann/json.hpp>

#include "unspeech/common.hpp"
#include "unspeech/model.hpp"

namespace unspeech {

struct OptimizerConfig {
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double l2_lambda = 1e-4;

  bool operator==(const OptimizerConfig&) const = default;

  void validate() const {
    if (!(learning_rate > 0.0)) throw InvalidArgument("learning_rate must be positive");
    if (!(beta1 > 0.0 && beta1 < 1.0)) throw InvalidArgument("beta1 must be in (0, 1)");
    if (!(beta2 > 0.0 && beta2 < 1.0)) throw InvalidArgument("beta2 must be in (0, 1)");
    if (!(eps > 0.0)) throw InvalidArgument("eps must be positive");
    if (!(l2_lambda >= 0.0)) throw InvalidArgument("l2_lambda must be non-negative");
  }
};

inline void to_json(nlohmann::json& j, const OptimizerConfig& o) {
  j = {{"learning_rate", o.learning_rate}, {"beta1", o.beta1}, {"beta2", o.beta2},
       {"eps", o.eps}, {"l2_lambda", o.l2_lambda}};
}
inline void from_json(const nlohmann::json& j, OptimizerConfig& o) {
  OptimizerConfig d;
  o.learning_rate = j.value("learning_rate", d.learning_rate);
  o.beta1 = j.value("beta1", d.beta1);
  o.beta2 = j.value("beta2", d.beta2);
  o.eps = j.value("eps", d.eps);
  o.l2_lambda = j.value("l2_lambda", d.l2_lambda);
}

/// First/second moment estimates and the step counter.
template <typename T>
struct AdamState {
  ParamSet<T> m;
  ParamSet<T> v;
  std::uint64_t step = 0;

  AdamState() = default;
  explicit AdamState(const ParamSet<T>& params) : m(params.zeros_like()), v(params.zeros_like()) {}
};

/// Thrown when a gradient holds NaN or Inf; parameters are left untouched.
class NonFiniteGradient : public Error {
 public:
  using Error::Error;
};

/// Bias-corrected ADAM update. `grads` must already include the L2 term.
template <typename T>
void adam_step(ParamSet<T>& params, const ParamSet<T>& grads, AdamState<T>& state, const OptimizerConfig& cfg) {
  if (grads.tensors.size() != params.tensors.size() || state.m.tensors.size() != params.tensors.size())
    throw ShapeError("adam_step: gradient/moment layout does not match parameters");
  for (std::size_t i = 0; i < params.tensors.size(); ++i) {
    if (grads.tensors[i].size() != params.tensors[i].size() || state.m.tensors[i].size() != params.tensors[i].size() ||
        state.v.tensors[i].size() != params.tensors[i].size())
      throw ShapeError("adam_step: tensor '" + params.tensors[i].name + "' has mismatched moments");
    for (T g : grads.tensors[i].data)
      if (!std::isfinite(g))
        throw NonFiniteGradient("adam_step: non-finite gradient in tensor '" + params.tensors[i].name + "'");
  }

  const std::uint64_t t = state.step + 1;
  const double c1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(t));
  const double c2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(t));
  const T b1 = static_cast<T>(cfg.beta1), b2 = static_cast<T>(cfg.beta2);
  const T lr = static_cast<T>(cfg.learning_rate), eps = static_cast<T>(cfg.eps);
  const T inv_c1 = static_cast<T>(1.0 / c1), inv_c2 = static_cast<T>(1.0 / c2);
  for (std::size_t i = 0; i < params.tensors.size(); ++i) {
    auto& p = params.tensors[i].data;
    const auto& g = grads.tensors[i].data;
    auto& m = state.m.tensors[i].data;
    auto& v = state.v.tensors[i].data;
    for (std::size_t j = 0; j < p.size(); ++j) {
      m[j] = b1 * m[j] + (T(1) - b1) * g[j];
      v[j] = b2 * v[j] + (T(1) - b2) * g[j] * g[j];
      const T mhat = m[j] * inv_c1;
      const T vhat = v[j] * inv_c2;
      p[j] -= lr * mhat / (std::sqrt(vhat) + eps);
    }
  }
  state.step = t;
}

}  // namespace unspeech
