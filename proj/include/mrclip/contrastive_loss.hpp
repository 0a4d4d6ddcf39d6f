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

// Bidirectional supervised contrastive loss between paired image and text
// embeddings, with an InfoNCE baseline and anchor-sharded evaluation.
//
// For one direction with anchors x_i and candidates y_j:
//
//   s_ij   = x_i . y_j / tau
//   L      = (1/N) sum_i [ logsumexp_j s_ij - (1/|P(i)|) sum_{p in P(i)} s_ip ]
//
// P(i) holds every candidate whose label equals label_i, including the
// anchor's own pair; the candidate set is the whole batch. The total loss is
// the mean of the image->text and text->image directions. InfoNCE uses
// P(i) = {i}.

#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <span>
#include <vector>

#include "mrclip/error.hpp"
#include "mrclip/tensor.hpp"

namespace mrclip {

enum class LossKind { SupCon, InfoNCE };

struct ContrastiveBatch {
  const Tensor& image_embeddings;  // N x d, unit rows
  const Tensor& text_embeddings;   // N x d, unit rows
  std::span<const int> labels;
  double temperature;
};

// Half-open anchor ranges [boundaries[k], boundaries[k+1]).
struct ShardPlan {
  std::vector<std::size_t> boundaries;

  static ShardPlan whole(std::size_t n) { return ShardPlan{{0, n}}; }

  // k shards whose sizes differ by at most one.
  static ShardPlan even(std::size_t n, std::size_t k) {
    k = std::max<std::size_t>(1, std::min(k, std::max<std::size_t>(n, 1)));
    ShardPlan plan;
    plan.boundaries.push_back(0);
    for (std::size_t s = 0; s < k; ++s) {
      plan.boundaries.push_back(plan.boundaries.back() + n / k + (s < n % k ? 1 : 0));
    }
    return plan;
  }

  static ShardPlan from_sizes(std::span<const std::size_t> sizes) {
    ShardPlan plan;
    plan.boundaries.push_back(0);
    for (auto size : sizes) plan.boundaries.push_back(plan.boundaries.back() + size);
    return plan;
  }

  std::size_t shard_count() const { return boundaries.empty() ? 0 : boundaries.size() - 1; }

  void validate(std::size_t n) const {
    if (boundaries.size() < 2 || boundaries.front() != 0) {
      throw Error(ErrorKind::InvalidPlan, "plan must start at 0 and hold at least one shard");
    }
    for (std::size_t k = 1; k < boundaries.size(); ++k) {
      if (boundaries[k] <= boundaries[k - 1]) {
        throw Error(ErrorKind::InvalidPlan, "shards must be non-empty and ordered");
      }
    }
    if (boundaries.back() != n) throw Error(ErrorKind::InvalidPlan, "shards must cover the batch");
  }
};

struct LossGradients {
  double loss = 0.0;
  Tensor d_images;
  Tensor d_texts;
  double d_temperature = 0.0;
};

inline constexpr double kUnitNormTolerance = 1e-6;

namespace detail {

inline void check_batch_shape(const ContrastiveBatch& batch) {
  const auto n = batch.image_embeddings.rows();
  if (n == 0) throw Error(ErrorKind::EmptyBatch);
  if (!batch.image_embeddings.same_shape(batch.text_embeddings) || batch.labels.size() != n) {
    throw Error(ErrorKind::ShapeMismatch, "images, texts and labels must share N");
  }
  if (!(batch.temperature > 0.0) || !std::isfinite(batch.temperature)) {
    throw Error(ErrorKind::NonPositiveTemperature);
  }
}

inline void check_unit_rows(const Tensor& embeddings) {
  for (std::size_t i = 0; i < embeddings.rows(); ++i) {
    const double norm = l2_norm(embeddings.row(i));
    if (!(std::abs(norm - 1.0) <= kUnitNormTolerance)) {
      throw Error(ErrorKind::NonUnitEmbedding, "row " + std::to_string(i) + " has norm " +
                                                   std::to_string(norm));
    }
  }
}

struct DirectionalOutput {
  double loss = 0.0;
  double d_temperature = 0.0;
};

// Accumulates anchors [begin, end) of one direction. `weight` scales both the
// loss and the gradients (1/2 for each half of the bidirectional loss); the
// 1/N anchor average is applied here. Gradient buffers may be null.
inline DirectionalOutput directional_range(const Tensor& anchors, const Tensor& candidates,
                                           std::span<const int> labels, double tau,
                                           LossKind kind, std::size_t begin, std::size_t end,
                                           double weight, Tensor* d_anchors,
                                           Tensor* d_candidates) {
  const std::size_t n = anchors.rows();
  const std::size_t dim = anchors.cols();
  const double scale = weight / static_cast<double>(n);
  std::vector<double> sims(n), coeff(n);
  DirectionalOutput out;
  for (std::size_t i = begin; i < end; ++i) {
    const auto anchor = anchors.row(i);
    double max_sim = -std::numeric_limits<double>::infinity();
    for (std::size_t j = 0; j < n; ++j) {
      sims[j] = dot(anchor, candidates.row(j)) / tau;
      max_sim = std::max(max_sim, sims[j]);
    }
    double partition = 0.0;
    for (std::size_t j = 0; j < n; ++j) partition += std::exp(sims[j] - max_sim);
    const double log_partition = max_sim + std::log(partition);

    std::size_t positives = 0;
    double positive_sum = 0.0;
    for (std::size_t j = 0; j < n; ++j) {
      const bool positive = kind == LossKind::SupCon ? labels[j] == labels[i] : j == i;
      if (positive) {
        ++positives;
        positive_sum += sims[j];
      }
    }
    // The anchor's own pair is always a positive.
    out.loss += scale * (log_partition - positive_sum / static_cast<double>(positives));

    if (d_anchors == nullptr) continue;
    const double inv_pos = 1.0 / static_cast<double>(positives);
    for (std::size_t j = 0; j < n; ++j) {
      const bool positive = kind == LossKind::SupCon ? labels[j] == labels[i] : j == i;
      coeff[j] = scale * (std::exp(sims[j] - log_partition) - (positive ? inv_pos : 0.0));
      out.d_temperature -= coeff[j] * sims[j] / tau;
    }
    auto grad_anchor = d_anchors->row(i);
    for (std::size_t j = 0; j < n; ++j) {
      const double c = coeff[j] / tau;
      if (c == 0.0) continue;
      const auto cand = candidates.row(j);
      auto grad_cand = d_candidates->row(j);
      for (std::size_t k = 0; k < dim; ++k) {
        grad_anchor[k] += c * cand[k];
        grad_cand[k] += c * anchor[k];
      }
    }
  }
  return out;
}

// No unit-norm check, so finite-difference probes can step off the sphere.
inline LossGradients evaluate(const ContrastiveBatch& batch, const ShardPlan& plan, LossKind kind,
                              bool with_gradients = true) {
  check_batch_shape(batch);
  const std::size_t n = batch.image_embeddings.rows();
  plan.validate(n);
  const auto& images = batch.image_embeddings;
  const auto& texts = batch.text_embeddings;

  LossGradients total;
  if (with_gradients) {
    total.d_images = Tensor(images.shape(), 0.0);
    total.d_texts = Tensor(texts.shape(), 0.0);
  }
  // Each shard owns its partial results; the reduction runs in shard order.
  for (std::size_t s = 0; s + 1 < plan.boundaries.size(); ++s) {
    const std::size_t begin = plan.boundaries[s], end = plan.boundaries[s + 1];
    Tensor d_img, d_txt;
    if (with_gradients) {
      d_img = Tensor(images.shape(), 0.0);
      d_txt = Tensor(texts.shape(), 0.0);
    }
    auto* gi = with_gradients ? &d_img : nullptr;
    auto* gt = with_gradients ? &d_txt : nullptr;
    const auto i2t = directional_range(images, texts, batch.labels, batch.temperature, kind, begin,
                                       end, 0.5, gi, gt);
    const auto t2i = directional_range(texts, images, batch.labels, batch.temperature, kind, begin,
                                       end, 0.5, gt, gi);
    total.loss += i2t.loss + t2i.loss;
    total.d_temperature += i2t.d_temperature + t2i.d_temperature;
    if (with_gradients) {
      for (std::size_t k = 0; k < d_img.size(); ++k) {
        total.d_images[k] += d_img[k];
        total.d_texts[k] += d_txt[k];
      }
    }
  }
  return total;
}

}  // namespace detail

inline double supcon_directional(const Tensor& anchors, const Tensor& candidates,
                                 std::span<const int> labels, double tau) {
  const ContrastiveBatch batch{anchors, candidates, labels, tau};
  detail::check_batch_shape(batch);
  detail::check_unit_rows(anchors);
  detail::check_unit_rows(candidates);
  return detail::directional_range(anchors, candidates, labels, tau, LossKind::SupCon, 0,
                                   anchors.rows(), 1.0, nullptr, nullptr)
      .loss;
}

// Loss and gradients with respect to both embedding sets and tau, computed
// shard by shard against the full candidate set.
inline LossGradients sharded_loss(const ContrastiveBatch& batch, const ShardPlan& plan,
                                  LossKind kind = LossKind::SupCon) {
  detail::check_batch_shape(batch);
  detail::check_unit_rows(batch.image_embeddings);
  detail::check_unit_rows(batch.text_embeddings);
  return detail::evaluate(batch, plan, kind);
}

inline LossGradients contrastive_loss(const ContrastiveBatch& batch,
                                      LossKind kind = LossKind::SupCon) {
  return sharded_loss(batch, ShardPlan::whole(batch.image_embeddings.rows()), kind);
}

inline double supcon_bidirectional(const ContrastiveBatch& batch) {
  detail::check_batch_shape(batch);
  detail::check_unit_rows(batch.image_embeddings);
  detail::check_unit_rows(batch.text_embeddings);
  return detail::evaluate(batch, ShardPlan::whole(batch.labels.size()), LossKind::SupCon, false)
      .loss;
}

inline double infonce_bidirectional(const ContrastiveBatch& batch) {
  detail::check_batch_shape(batch);
  detail::check_unit_rows(batch.image_embeddings);
  detail::check_unit_rows(batch.text_embeddings);
  return detail::evaluate(batch, ShardPlan::whole(batch.labels.size()), LossKind::InfoNCE, false)
      .loss;
}

}  // namespace mrclip
