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
using mrclip::testing::random_labels;
using mrclip::testing::random_unit_rows;
using mrclip::testing::relative_error;

namespace {

// Literal double sum: for each anchor, -1/|P| sum_p log(exp(s_ip) / sum_a exp(s_ia)).
double brute_directional(const Tensor& x, const Tensor& y, const std::vector<int>& labels,
                         double tau, bool infonce = false) {
  const std::size_t n = x.rows();
  double total = 0;
  for (std::size_t i = 0; i < n; ++i) {
    double denom = 0;
    for (std::size_t a = 0; a < n; ++a) denom += std::exp(dot(x.row(i), y.row(a)) / tau);
    double inner = 0;
    int count = 0;
    for (std::size_t p = 0; p < n; ++p) {
      const bool positive = infonce ? p == i : labels[p] == labels[i];
      if (!positive) continue;
      ++count;
      inner += std::log(std::exp(dot(x.row(i), y.row(p)) / tau) / denom);
    }
    total += -inner / count;
  }
  return total / static_cast<double>(n);
}

double brute_bidirectional(const Tensor& img, const Tensor& txt, const std::vector<int>& labels,
                           double tau, bool infonce = false) {
  return 0.5 * (brute_directional(img, txt, labels, tau, infonce) +
                brute_directional(txt, img, labels, tau, infonce));
}

Tensor one_hot_rows(std::size_t n, std::size_t d) {
  Tensor t(n, d);
  for (std::size_t i = 0; i < n; ++i) t(i, i % d) = 1.0;
  return t;
}

}  // namespace

TEST(SupCon, SingleSampleIsZero) {
  Rng rng(1);
  for (double tau : {0.01, 0.5, 3.0}) {
    const Tensor a = random_unit_rows(rng, 1, 5), b = random_unit_rows(rng, 1, 5);
    const std::vector<int> labels{4};
    EXPECT_NEAR(supcon_bidirectional({a, b, labels, tau}), 0.0, 1e-15);
    EXPECT_NEAR(infonce_bidirectional({a, b, labels, tau}), 0.0, 1e-15);
    EXPECT_NEAR(supcon_directional(a, b, labels, tau), 0.0, 1e-15);
  }
}

TEST(SupCon, TwoOrthogonalPairsClosedForm) {
  const Tensor z = one_hot_rows(2, 2);
  const std::vector<int> labels{0, 1};
  const double expected = std::log(1 + std::exp(-1.0));
  EXPECT_NEAR(expected, 0.313262, 1e-6);
  EXPECT_NEAR(supcon_directional(z, z, labels, 1.0), expected, 1e-15);
  EXPECT_NEAR(supcon_bidirectional({z, z, labels, 1.0}), expected, 1e-15);
}

TEST(SupCon, ThreeSamplesMatchBruteForce) {
  Rng rng(2);
  for (int trial = 0; trial < 50; ++trial) {
    const Tensor a = random_unit_rows(rng, 3, 4), b = random_unit_rows(rng, 3, 4);
    const std::vector<int> labels{0, 0, 1};
    EXPECT_NEAR(supcon_directional(a, b, labels, 0.5), brute_directional(a, b, labels, 0.5), 1e-10);
  }
}

TEST(SupCon, RandomBatchesMatchBruteForce) {
  Rng rng(3);
  for (int trial = 0; trial < 300; ++trial) {
    const std::size_t n = 1 + rng.below(32);
    const double tau = std::vector<double>{0.05, 0.5, 1.0}[rng.below(3)];
    const Tensor a = random_unit_rows(rng, n, 8), b = random_unit_rows(rng, n, 8);
    const auto labels = random_labels(rng, n, 1 + static_cast<int>(rng.below(6)));
    EXPECT_LE(relative_error(supcon_bidirectional({a, b, labels, tau}), brute_bidirectional(a, b, labels, tau)),
              1e-10);
  }
}

TEST(SupCon, EveryLabelPatternUpToSixSamples) {
  // Exhaustive over label assignments from 3 labels; checks the positive sets.
  Rng rng(4);
  for (std::size_t n = 1; n <= 6; ++n) {
    const Tensor a = random_unit_rows(rng, n, 3), b = random_unit_rows(rng, n, 3);
    std::size_t combos = 1;
    for (std::size_t i = 0; i < n; ++i) combos *= 3;
    for (std::size_t code = 0; code < combos; ++code) {
      std::vector<int> labels(n);
      for (std::size_t i = 0, c = code; i < n; ++i, c /= 3) labels[i] = static_cast<int>(c % 3);
      EXPECT_NEAR(supcon_bidirectional({a, b, labels, 0.3}), brute_bidirectional(a, b, labels, 0.3), 1e-11);
    }
  }
}

TEST(SupCon, SymmetricBatchDirectionsAgree) {
  Rng rng(5);
  const Tensor z = random_unit_rows(rng, 9, 4);
  const auto labels = random_labels(rng, 9, 3);
  EXPECT_NEAR(supcon_bidirectional({z, z, labels, 0.2}), supcon_directional(z, z, labels, 0.2), 1e-14);
}

TEST(SupCon, UniformPointGivesLogNForAnyTemperature) {
  for (std::size_t n : {1, 2, 5, 17}) {
    Tensor z(n, 3);
    for (std::size_t i = 0; i < n; ++i) z(i, 1) = 1.0;
    const std::vector<int> labels(n, 7);
    for (double tau : {0.01, 0.07, 1.0}) {
      EXPECT_NEAR(supcon_bidirectional({z, z, labels, tau}), std::log(static_cast<double>(n)), 1e-13);
    }
  }
}

TEST(InfoNce, EqualsSupConForDistinctLabels) {
  Rng rng(6);
  for (int trial = 0; trial < 100; ++trial) {
    const std::size_t n = 1 + rng.below(32);
    const Tensor a = random_unit_rows(rng, n, 6), b = random_unit_rows(rng, n, 6);
    std::vector<int> labels(n);
    for (std::size_t i = 0; i < n; ++i) labels[i] = static_cast<int>(3 * i + 1);
    rng.shuffle(labels.begin(), labels.end());
    const double tau = rng.uniform(0.02, 1.0);
    EXPECT_LE(std::abs(supcon_bidirectional({a, b, labels, tau}) - infonce_bidirectional({a, b, labels, tau})),
              1e-12);
  }
}

TEST(InfoNce, MatchesBruteForceAndIgnoresLabels) {
  Rng rng(7);
  for (int trial = 0; trial < 50; ++trial) {
    const std::size_t n = 1 + rng.below(20);
    const Tensor a = random_unit_rows(rng, n, 5), b = random_unit_rows(rng, n, 5);
    const auto labels = random_labels(rng, n, 2);
    EXPECT_NEAR(infonce_bidirectional({a, b, labels, 0.1}), brute_bidirectional(a, b, labels, 0.1, true), 1e-10);
  }
}

TEST(InfoNce, IdentitySimilarityClosedForm) {
  // s_ii = 1/tau, s_ij = 0: loss = log(e^{1/tau} + n - 1) - 1/tau.
  for (std::size_t n : {2, 4, 8}) {
    const Tensor z = one_hot_rows(n, n);
    const std::vector<int> labels(n, 0);
    for (double tau : {0.1, 0.5, 1.0}) {
      const double expected = std::log(std::exp(1 / tau) + static_cast<double>(n) - 1) - 1 / tau;
      EXPECT_NEAR(infonce_bidirectional({z, z, labels, tau}), expected, 1e-12);
    }
  }
}

TEST(Loss, PermutingTriplesLeavesLossUnchanged) {
  Rng rng(8);
  for (int trial = 0; trial < 30; ++trial) {
    const std::size_t n = 2 + rng.below(30);
    const Tensor a = random_unit_rows(rng, n, 4), b = random_unit_rows(rng, n, 4);
    const auto labels = random_labels(rng, n, 4);
    std::vector<std::size_t> perm(n);
    for (std::size_t i = 0; i < n; ++i) perm[i] = i;
    rng.shuffle(perm.begin(), perm.end());
    Tensor pa(n, 4), pb(n, 4);
    std::vector<int> pl(n);
    for (std::size_t i = 0; i < n; ++i) {
      std::copy(a.row(perm[i]).begin(), a.row(perm[i]).end(), pa.row(i).begin());
      std::copy(b.row(perm[i]).begin(), b.row(perm[i]).end(), pb.row(i).begin());
      pl[i] = labels[perm[i]];
    }
    EXPECT_NEAR(supcon_bidirectional({a, b, labels, 0.2}), supcon_bidirectional({pa, pb, pl, 0.2}), 1e-12);
    EXPECT_NEAR(infonce_bidirectional({a, b, labels, 0.2}), infonce_bidirectional({pa, pb, pl, 0.2}), 1e-12);
  }
}

TEST(Loss, GradientsMatchFiniteDifferences) {
  Rng rng(9);
  const double h = 1e-5;
  for (int trial = 0; trial < 10; ++trial) {
    const std::size_t n = 2 + rng.below(10);
    Tensor a = random_unit_rows(rng, n, 4), b = random_unit_rows(rng, n, 4);
    const auto labels = random_labels(rng, n, 3);
    double tau = rng.uniform(0.05, 1.0);
    const auto kind = trial % 2 ? LossKind::InfoNCE : LossKind::SupCon;
    const auto plan = ShardPlan::whole(n);
    const auto analytic = contrastive_loss({a, b, labels, tau}, kind);
    auto loss_at = [&] { return detail::evaluate({a, b, labels, tau}, plan, kind, false).loss; };
    double worst = 0;
    auto check = [&](double& x, double g) {
      const double saved = x;
      x = saved + h;
      const double up = loss_at();
      x = saved - h;
      const double down = loss_at();
      x = saved;
      const double numeric = (up - down) / (2 * h);
      worst = std::max(worst, std::abs(numeric - g) / std::max({std::abs(numeric), std::abs(g), 1e-6}));
    };
    for (std::size_t k = 0; k < a.size(); ++k) check(a[k], analytic.d_images[k]);
    for (std::size_t k = 0; k < b.size(); ++k) check(b[k], analytic.d_texts[k]);
    check(tau, analytic.d_temperature);
    EXPECT_LE(worst, 1e-4);
  }
}

TEST(Shards, OneShardIsBitwiseUnsharded) {
  Rng rng(10);
  const Tensor a = random_unit_rows(rng, 40, 8), b = random_unit_rows(rng, 40, 8);
  const auto labels = random_labels(rng, 40, 5);
  const auto whole = contrastive_loss({a, b, labels, 0.07});
  const auto one = sharded_loss({a, b, labels, 0.07}, ShardPlan::even(40, 1));
  EXPECT_EQ(whole.loss, one.loss);
  EXPECT_EQ(whole.d_images, one.d_images);
  EXPECT_EQ(whole.d_texts, one.d_texts);
  EXPECT_EQ(whole.d_temperature, one.d_temperature);
}

TEST(Shards, EvenAndUnevenPlansMatchUnsharded) {
  Rng rng(11);
  auto compare = [](const LossGradients& x, const LossGradients& y) {
    EXPECT_LE(relative_error(x.loss, y.loss), 1e-9);
    EXPECT_LE(relative_error(x.d_temperature, y.d_temperature), 1e-8);
    for (std::size_t k = 0; k < x.d_images.size(); ++k) {
      EXPECT_LE(std::abs(x.d_images[k] - y.d_images[k]), 1e-8 * std::max(1.0, std::abs(y.d_images[k])));
      EXPECT_LE(std::abs(x.d_texts[k] - y.d_texts[k]), 1e-8 * std::max(1.0, std::abs(y.d_texts[k])));
    }
  };
  const Tensor a = random_unit_rows(rng, 64, 8), b = random_unit_rows(rng, 64, 8);
  const auto labels = random_labels(rng, 64, 6);
  const ContrastiveBatch batch{a, b, labels, 0.1};
  const auto whole = contrastive_loss(batch);
  const std::vector<std::size_t> even{16, 16, 16, 16}, uneven{10, 54};
  compare(sharded_loss(batch, ShardPlan::from_sizes(even)), whole);
  compare(sharded_loss(batch, ShardPlan::from_sizes(uneven)), whole);
  for (std::size_t k : {2, 3, 7, 64}) compare(sharded_loss(batch, ShardPlan::even(64, k)), whole);
}

TEST(Shards, EvenPlanPartitionsTheBatch) {
  for (std::size_t n = 1; n < 70; ++n) {
    for (std::size_t k = 1; k < 15; ++k) {
      const auto plan = ShardPlan::even(n, k);
      EXPECT_NO_THROW(plan.validate(n));
      EXPECT_EQ(plan.shard_count(), std::min(n, k));
    }
  }
}

TEST(Shards, OverlapsAndGapsAreInvalidPlans) {
  Rng rng(12);
  const Tensor a = random_unit_rows(rng, 10, 3);
  const auto labels = random_labels(rng, 10, 2);
  for (ShardPlan plan : {ShardPlan{{0, 5, 5, 10}}, ShardPlan{{0, 6, 4, 10}}, ShardPlan{{0, 9}},
                         ShardPlan{{1, 10}}, ShardPlan{{0}}, ShardPlan{{0, 11}}}) {
    try {
      sharded_loss({a, a, labels, 0.1}, plan);
      FAIL();
    } catch (const Error& e) {
      EXPECT_EQ(e.kind(), ErrorKind::InvalidPlan);
    }
  }
}

TEST(Loss, TypedInputErrors) {
  Rng rng(13);
  const Tensor a = random_unit_rows(rng, 4, 3);
  const std::vector<int> labels{0, 1, 0, 1};
  auto kind_of = [](auto&& f) {
    try {
      f();
    } catch (const Error& e) {
      return e.kind();
    }
    return ErrorKind::Io;
  };
  const Tensor empty(0, 3);
  const std::vector<int> none;
  EXPECT_EQ(kind_of([&] { supcon_bidirectional({empty, empty, none, 0.1}); }), ErrorKind::EmptyBatch);
  Tensor off = a;
  off(2, 0) += 0.01;
  EXPECT_EQ(kind_of([&] { supcon_bidirectional({off, a, labels, 0.1}); }), ErrorKind::NonUnitEmbedding);
  EXPECT_EQ(kind_of([&] { supcon_bidirectional({a, a, labels, 0.0}); }), ErrorKind::NonPositiveTemperature);
  EXPECT_EQ(kind_of([&] { supcon_bidirectional({a, a, labels, -1.0}); }), ErrorKind::NonPositiveTemperature);
  const std::vector<int> short_labels{0, 1};
  EXPECT_EQ(kind_of([&] { supcon_bidirectional({a, a, short_labels, 0.1}); }), ErrorKind::ShapeMismatch);
}

TEST(Loss, LargeInverseTemperatureStaysFinite) {
  Rng rng(14);
  const Tensor a = random_unit_rows(rng, 32, 8), b = random_unit_rows(rng, 32, 8);
  const auto labels = random_labels(rng, 32, 4);
  const double loss = supcon_bidirectional({a, b, labels, 1e-4});
  EXPECT_TRUE(std::isfinite(loss));
}
