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

#include <gtest/gtest.h>

#include <cmath>

#include "generators.hpp"
#include "mrclip.hpp"

using namespace mrclip;
using mrclip::testing::random_rows;

namespace {

std::vector<Parameter> make_params(Rng& rng) {
  return {{"w", random_rows(rng, 3, 4), true}, {"b", random_rows(rng, 1, 4), false}};
}

}  // namespace

TEST(EffectiveLr, LinearWarmup) {
  AdamConfig c;
  c.lr = 1e-4;
  c.warmup_steps = 2000;
  EXPECT_DOUBLE_EQ(effective_lr(c, 1000), 5e-5);
  EXPECT_DOUBLE_EQ(effective_lr(c, 1), 1e-4 / 2000);
  EXPECT_DOUBLE_EQ(effective_lr(c, 2000), 1e-4);
  EXPECT_DOUBLE_EQ(effective_lr(c, 50000), 1e-4);
  c.warmup_steps = 0;
  EXPECT_DOUBLE_EQ(effective_lr(c, 1), 1e-4);
}

TEST(EffectiveLr, CosineAfterWarmup) {
  AdamConfig c;
  c.lr = 0.1;
  c.warmup_steps = 10;
  c.total_steps = 110;
  EXPECT_DOUBLE_EQ(effective_lr(c, 5), 0.05);
  EXPECT_DOUBLE_EQ(effective_lr(c, 10), 0.1);
  EXPECT_NEAR(effective_lr(c, 60), 0.05, 1e-15);
  EXPECT_NEAR(effective_lr(c, 35), 0.1 * 0.5 * (1 + std::cos(M_PI / 4)), 1e-15);
  EXPECT_NEAR(effective_lr(c, 110), 0.0, 1e-18);
  EXPECT_NEAR(effective_lr(c, 500), 0.0, 1e-18);
  for (std::int64_t t = 11; t <= 110; ++t) EXPECT_LE(effective_lr(c, t), effective_lr(c, t - 1));
}

TEST(Adam, SingleStepClosedForm) {
  Rng rng(1);
  for (int trial = 0; trial < 20; ++trial) {
    auto params = make_params(rng);
    const auto before = params;
    std::vector<Tensor> grads = {random_rows(rng, 3, 4), random_rows(rng, 1, 4)};
    AdamConfig c;
    c.lr = rng.uniform(1e-4, 1e-1);
    c.weight_decay = rng.uniform(0, 0.5);
    c.warmup_steps = 1 + static_cast<std::int64_t>(rng.below(10));
    auto state = make_optimizer(c, params);
    adam_step(params, grads, state);
    const double lr = c.lr / static_cast<double>(c.warmup_steps);
    for (std::size_t p = 0; p < params.size(); ++p) {
      const double decay = params[p].decay ? 1 - lr * c.weight_decay : 1.0;
      for (std::size_t k = 0; k < params[p].value.size(); ++k) {
        const double g = grads[p][k];
        const double expected = before[p].value[k] * decay - lr * g / (std::abs(g) + c.eps);
        EXPECT_NEAR(params[p].value[k], expected, 1e-14);
      }
    }
    EXPECT_EQ(state.step, 1);
  }
}

TEST(Adam, TwoStepsMatchLiteralRecurrence) {
  Rng rng(2);
  auto params = make_params(rng);
  AdamConfig c;
  c.lr = 0.01;
  c.warmup_steps = 0;
  auto state = make_optimizer(c, params);
  const double p0 = params[0].value[0];
  const double g1 = 0.3, g2 = -0.7;
  for (double g : {g1, g2}) {
    std::vector<Tensor> grads = {Tensor(3, 4, 0.0), Tensor(1, 4, 0.0)};
    grads[0][0] = g;
    adam_step(params, grads, state);
  }
  double p = p0, m = 0, v = 0;
  int t = 0;
  for (double g : {g1, g2}) {
    ++t;
    p *= 1 - c.lr * c.weight_decay;
    m = c.beta1 * m + (1 - c.beta1) * g;
    v = c.beta2 * v + (1 - c.beta2) * g * g;
    p -= c.lr * (m / (1 - std::pow(c.beta1, t))) / (std::sqrt(v / (1 - std::pow(c.beta2, t))) + c.eps);
  }
  EXPECT_NEAR(params[0].value[0], p, 1e-15);
}

TEST(Adam, ZeroGradientWithoutDecayLeavesParameters) {
  Rng rng(3);
  auto params = make_params(rng);
  const auto before = params;
  AdamConfig c;
  c.weight_decay = 0;
  c.warmup_steps = 0;
  auto state = make_optimizer(c, params);
  for (int i = 0; i < 5; ++i) adam_step(params, std::vector<Tensor>{Tensor(3, 4), Tensor(1, 4)}, state);
  for (std::size_t p = 0; p < params.size(); ++p) EXPECT_EQ(params[p].value, before[p].value);
}

TEST(Adam, ShapeMismatch) {
  Rng rng(4);
  auto params = make_params(rng);
  auto state = make_optimizer({}, params);
  auto kind = [&](std::vector<Tensor> grads) {
    try {
      adam_step(params, grads, state);
    } catch (const Error& e) {
      return e.kind();
    }
    return ErrorKind::Io;
  };
  EXPECT_EQ(kind({Tensor(3, 4)}), ErrorKind::ShapeMismatch);
  EXPECT_EQ(kind({Tensor(4, 3), Tensor(1, 4)}), ErrorKind::ShapeMismatch);
  EXPECT_EQ(state.step, 0);
}

TEST(Adam, MomentShapesFollowParameters) {
  const auto model = DualEncoder::init({}, 1);
  const auto state = make_optimizer({}, model.parameters());
  ASSERT_EQ(state.m.size(), model.parameters().size());
  for (std::size_t i = 0; i < state.m.size(); ++i) {
    EXPECT_TRUE(state.m[i].same_shape(model.parameters()[i].value));
    EXPECT_TRUE(state.v[i].same_shape(model.parameters()[i].value));
  }
}
