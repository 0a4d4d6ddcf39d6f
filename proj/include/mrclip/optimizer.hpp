// Copyright 2026 The MR-CLIP Desk Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
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
#include <numbers>
#include <span>
#include <vector>

#include "mrclip/encoder.hpp"
#include "mrclip/error.hpp"
#include "mrclip/tensor.hpp"

namespace mrclip {

struct AdamConfig {
  double lr = 1e-4;
  double beta1 = 0.9;
  double beta2 = 0.98;
  double eps = 1e-8;
  double weight_decay = 0.2;
  std::int64_t warmup_steps = 2000;
  std::int64_t total_steps = 0;  // > warmup_steps enables cosine decay to zero
};

struct OptimizerState {
  AdamConfig config;
  std::int64_t step = 0;
  std::vector<Tensor> m;
  std::vector<Tensor> v;
};

// Linear warmup over the first warmup_steps steps (step is 1-based), then flat,
// or a half-cosine down to zero at total_steps when total_steps is set.
inline double effective_lr(const AdamConfig& config, std::int64_t step) {
  if (config.warmup_steps > 0 && step < config.warmup_steps) {
    return config.lr * static_cast<double>(step) / static_cast<double>(config.warmup_steps);
  }
  const std::int64_t warmup = std::max<std::int64_t>(config.warmup_steps, 0);
  if (config.total_steps <= warmup) return config.lr;
  const double progress = std::min(1.0, static_cast<double>(step - warmup) /
                                            static_cast<double>(config.total_steps - warmup));
  return config.lr * 0.5 * (1.0 + std::cos(std::numbers::pi * progress));
}

inline OptimizerState make_optimizer(const AdamConfig& config, std::span<const Parameter> params) {
  OptimizerState state;
  state.config = config;
  for (const auto& p : params) {
    state.m.emplace_back(p.value.shape(), 0.0);
    state.v.emplace_back(p.value.shape(), 0.0);
  }
  return state;
}

// Bias-corrected Adam with decoupled weight decay, p <- p * (1 - lr_eff * wd),
// applied before the moment update to parameters flagged for decay.
inline void adam_step(std::span<Parameter> params, std::span<const Tensor> grads,
                      OptimizerState& state) {
  if (grads.size() != params.size() || state.m.size() != params.size() ||
      state.v.size() != params.size()) {
    throw Error(ErrorKind::ShapeMismatch, "parameter, gradient and moment counts differ");
  }
  for (std::size_t i = 0; i < params.size(); ++i) {
    if (!params[i].value.same_shape(grads[i]) || !params[i].value.same_shape(state.m[i]) ||
        !params[i].value.same_shape(state.v[i])) {
      throw Error(ErrorKind::ShapeMismatch, "shape mismatch for " + params[i].name);
    }
  }

  const auto& cfg = state.config;
  const std::int64_t t = ++state.step;
  const double lr = effective_lr(cfg, t);
  const double correction1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(t));
  const double correction2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(t));
  for (std::size_t i = 0; i < params.size(); ++i) {
    auto p = params[i].value.data();
    const auto g = grads[i].data();
    auto m = state.m[i].data();
    auto v = state.v[i].data();
    const double decay = params[i].decay ? 1.0 - lr * cfg.weight_decay : 1.0;
    for (std::size_t k = 0; k < p.size(); ++k) {
      p[k] *= decay;
      m[k] = cfg.beta1 * m[k] + (1.0 - cfg.beta1) * g[k];
      v[k] = cfg.beta2 * v[k] + (1.0 - cfg.beta2) * g[k] * g[k];
      const double m_hat = m[k] / correction1;
      const double v_hat = v[k] / correction2;
      p[k] -= lr * m_hat / (std::sqrt(v_hat) + cfg.eps);
    }
  }
}

}  // namespace mrclip
