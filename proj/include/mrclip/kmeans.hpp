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
#include <array>
#include <cstdint>
#include <limits>
#include <set>
#include <span>
#include <vector>

#include "mrclip/error.hpp"
#include "mrclip/metadata.hpp"
#include "mrclip/util.hpp"

namespace mrclip {

// (TE, TR, TI present, TI or 0). The presence flag keeps absent-TI scans
// apart from TI = 0.
using KMeansPoint = std::array<double, 4>;

struct KMeansModel {
  std::vector<KMeansPoint> centroids;  // in normalized space
  KMeansPoint feature_min{};
  KMeansPoint feature_max{};
  std::vector<double> inertia_history;
  int iterations = 0;
  std::uint64_t seed = 0;
};

inline KMeansPoint raw_kmeans_feature(const MetadataRecord& r) {
  return {r.te_ms, r.tr_ms, r.ti_ms ? 1.0 : 0.0, r.ti_ms.value_or(0.0)};
}

// Min-max scaling; a constant dimension maps to 0.
inline KMeansPoint normalize_feature(const KMeansPoint& raw, const KMeansModel& model) {
  KMeansPoint out{};
  for (std::size_t d = 0; d < 4; ++d) {
    const double range = model.feature_max[d] - model.feature_min[d];
    out[d] = range > 0.0 ? (raw[d] - model.feature_min[d]) / range : 0.0;
  }
  return out;
}

inline double squared_distance(const KMeansPoint& a, const KMeansPoint& b) {
  double sum = 0.0;
  for (std::size_t d = 0; d < 4; ++d) sum += (a[d] - b[d]) * (a[d] - b[d]);
  return sum;
}

// Nearest centroid; ties go to the lower index.
inline int nearest_centroid(const KMeansPoint& point, std::span<const KMeansPoint> centroids) {
  int best = 0;
  double best_dist = std::numeric_limits<double>::infinity();
  for (std::size_t c = 0; c < centroids.size(); ++c) {
    const double dist = squared_distance(point, centroids[c]);
    if (dist < best_dist) {
      best_dist = dist;
      best = static_cast<int>(c);
    }
  }
  return best;
}

inline int assign_cluster(const MetadataRecord& record, const KMeansModel& model) {
  return nearest_centroid(normalize_feature(raw_kmeans_feature(record), model), model.centroids);
}

inline constexpr int kKMeansMaxIterations = 300;
inline constexpr double kKMeansTolerance = 1e-8;

// Lloyd iterations from k-means++ seeding over normalized features.
// inertia_history[0] is the inertia of the seeding; each later entry follows
// one centroid update and reassignment.
inline KMeansModel fit_kmeans(std::span<const MetadataRecord> records, int n_clusters,
                              std::uint64_t seed) {
  if (n_clusters < 1) throw Error(ErrorKind::InvalidConfig, "n_clusters must be >= 1");
  std::set<KMeansPoint> distinct;
  for (const auto& r : records) distinct.insert(raw_kmeans_feature(r));
  if (distinct.size() < static_cast<std::size_t>(n_clusters)) {
    throw Error(ErrorKind::TooFewDistinctPoints,
                std::to_string(distinct.size()) + " distinct points for " +
                    std::to_string(n_clusters) + " clusters");
  }

  KMeansModel model;
  model.seed = seed;
  model.feature_min.fill(std::numeric_limits<double>::infinity());
  model.feature_max.fill(-std::numeric_limits<double>::infinity());
  for (const auto& point : distinct) {
    for (std::size_t d = 0; d < 4; ++d) {
      model.feature_min[d] = std::min(model.feature_min[d], point[d]);
      model.feature_max[d] = std::max(model.feature_max[d], point[d]);
    }
  }

  std::vector<KMeansPoint> points;
  points.reserve(records.size());
  for (const auto& r : records) points.push_back(normalize_feature(raw_kmeans_feature(r), model));

  // k-means++ seeding.
  Rng rng(seed);
  auto& centroids = model.centroids;
  centroids.push_back(points[rng.below(points.size())]);
  std::vector<double> nearest(points.size());
  while (centroids.size() < static_cast<std::size_t>(n_clusters)) {
    double total = 0.0;
    for (std::size_t i = 0; i < points.size(); ++i) {
      double best = std::numeric_limits<double>::infinity();
      for (const auto& c : centroids) best = std::min(best, squared_distance(points[i], c));
      nearest[i] = best;
      total += best;
    }
    double target = rng.uniform() * total;
    std::size_t pick = points.size();
    for (std::size_t i = 0; i < points.size(); ++i) {
      if (nearest[i] <= 0.0) continue;
      pick = i;
      target -= nearest[i];
      if (target < 0.0) break;
    }
    centroids.push_back(points[pick]);
  }

  std::vector<int> assignment(points.size());
  auto assign_all = [&] {
    double inertia = 0.0;
    for (std::size_t i = 0; i < points.size(); ++i) {
      assignment[i] = nearest_centroid(points[i], centroids);
      inertia += squared_distance(points[i], centroids[static_cast<std::size_t>(assignment[i])]);
    }
    return inertia;
  };

  model.inertia_history.push_back(assign_all());
  for (int iter = 0; iter < kKMeansMaxIterations; ++iter) {
    std::vector<KMeansPoint> sums(centroids.size(), KMeansPoint{});
    std::vector<std::size_t> counts(centroids.size(), 0);
    for (std::size_t i = 0; i < points.size(); ++i) {
      const auto c = static_cast<std::size_t>(assignment[i]);
      for (std::size_t d = 0; d < 4; ++d) sums[c][d] += points[i][d];
      ++counts[c];
    }
    double movement = 0.0;
    for (std::size_t c = 0; c < centroids.size(); ++c) {
      if (counts[c] == 0) continue;  // empty cluster keeps its centroid
      KMeansPoint updated{};
      for (std::size_t d = 0; d < 4; ++d) updated[d] = sums[c][d] / static_cast<double>(counts[c]);
      movement = std::max(movement, std::sqrt(squared_distance(updated, centroids[c])));
      centroids[c] = updated;
    }
    model.inertia_history.push_back(assign_all());
    model.iterations = iter + 1;
    if (movement < kKMeansTolerance) break;
  }
  return model;
}

}  // namespace mrclip
