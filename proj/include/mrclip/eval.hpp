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

// Retrieval and classification metrics over a shared embedding space. All
// rankings are deterministic: equal similarities order by ascending label id.

#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <optional>
#include <span>
#include <utility>
#include <string>
#include <vector>

#include "mrclip/error.hpp"
#include "mrclip/label_space.hpp"
#include "mrclip/tensor.hpp"

namespace mrclip {

// One unit text embedding per label, rows ordered like label_ids.
struct Gallery {
  std::vector<int> label_ids;
  Tensor embeddings;
};

inline Tensor similarity_matrix(const Tensor& queries, const Tensor& keys) {
  Tensor sims(queries.rows(), keys.rows());
  for (std::size_t i = 0; i < queries.rows(); ++i) {
    for (std::size_t j = 0; j < keys.rows(); ++j) sims(i, j) = dot(queries.row(i), keys.row(j));
  }
  return sims;
}

namespace detail {

// Gallery positions ordered by (similarity desc, label asc).
inline std::vector<std::size_t> rank_row(std::span<const double> sims, std::span<const int> labels) {
  std::vector<std::size_t> order(sims.size());
  for (std::size_t j = 0; j < order.size(); ++j) order[j] = j;
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    if (sims[a] != sims[b]) return sims[a] > sims[b];
    if (labels[a] != labels[b]) return labels[a] < labels[b];
    return a < b;
  });
  return order;
}

}  // namespace detail

// Fraction of queries whose own label's gallery entry ranks within the top k.
inline double recall_at_k(const Tensor& queries, std::span<const int> query_labels,
                          const Gallery& gallery, int k) {
  if (gallery.label_ids.empty()) throw Error(ErrorKind::EmptyGallery);
  if (queries.rows() != query_labels.size()) throw Error(ErrorKind::ShapeMismatch, "query labels");
  if (queries.rows() == 0) return 0.0;
  std::map<int, std::size_t> position;
  for (std::size_t j = 0; j < gallery.label_ids.size(); ++j) position[gallery.label_ids[j]] = j;

  std::size_t hits = 0;
  for (std::size_t i = 0; i < queries.rows(); ++i) {
    auto it = position.find(query_labels[i]);
    if (it == position.end()) continue;
    const double own = dot(queries.row(i), gallery.embeddings.row(it->second));
    std::size_t rank = 0;
    for (std::size_t j = 0; j < gallery.label_ids.size(); ++j) {
      if (j == it->second) continue;
      const double s = dot(queries.row(i), gallery.embeddings.row(j));
      if (s > own || (s == own && gallery.label_ids[j] < query_labels[i])) ++rank;
    }
    if (rank < static_cast<std::size_t>(k)) ++hits;
  }
  return static_cast<double>(hits) / static_cast<double>(queries.rows());
}

// Each label's text embedding retrieves images; a hit is any of the top k
// images carrying that label.
inline double text_to_image_recall(const Gallery& label_queries, const Tensor& images,
                                   std::span<const int> image_labels, int k) {
  if (images.rows() == 0) throw Error(ErrorKind::EmptyImageSet);
  if (images.rows() != image_labels.size()) throw Error(ErrorKind::ShapeMismatch, "image labels");
  if (label_queries.label_ids.empty()) return 0.0;
  std::size_t hits = 0;
  std::vector<double> sims(images.rows());
  for (std::size_t q = 0; q < label_queries.label_ids.size(); ++q) {
    for (std::size_t i = 0; i < images.rows(); ++i) {
      sims[i] = dot(label_queries.embeddings.row(q), images.row(i));
    }
    const auto order = detail::rank_row(sims, image_labels);
    const std::size_t top = std::min<std::size_t>(static_cast<std::size_t>(k), order.size());
    for (std::size_t r = 0; r < top; ++r) {
      if (image_labels[order[r]] == label_queries.label_ids[q]) {
        ++hits;
        break;
      }
    }
  }
  return static_cast<double>(hits) / static_cast<double>(label_queries.label_ids.size());
}

// Most frequent label; ties by highest mean score among the tied labels'
// slices, then ascending label id.
inline int scan_majority_vote(std::span<const int> predictions, std::span<const double> scores) {
  if (predictions.empty()) throw Error(ErrorKind::EmptyPredictionList);
  if (scores.size() != predictions.size()) throw Error(ErrorKind::ShapeMismatch, "scores");
  std::map<int, std::pair<std::size_t, double>> tally;
  for (std::size_t i = 0; i < predictions.size(); ++i) {
    auto& [count, sum] = tally[predictions[i]];
    ++count;
    sum += scores[i];
  }
  int best = tally.begin()->first;
  std::size_t best_count = 0;
  double best_mean = -std::numeric_limits<double>::infinity();
  for (const auto& [label, entry] : tally) {
    const double mean = entry.second / static_cast<double>(entry.first);
    if (entry.first > best_count || (entry.first == best_count && mean > best_mean)) {
      best = label;
      best_count = entry.first;
      best_mean = mean;
    }
  }
  return best;
}

// Full gallery ranking for one scan. Labels order by slice votes (top-1
// predictions), then mean top-1 score among voters, then mean similarity over
// all slices, then ascending id. The first entry equals scan_majority_vote.
inline std::vector<int> rank_scan(const Tensor& slice_sims, const Gallery& gallery) {
  const std::size_t g = gallery.label_ids.size();
  std::vector<std::size_t> votes(g, 0);
  std::vector<double> vote_score(g, 0.0), mean_sim(g, 0.0);
  for (std::size_t s = 0; s < slice_sims.rows(); ++s) {
    const auto row = slice_sims.row(s);
    const auto top = detail::rank_row(row, gallery.label_ids).front();
    ++votes[top];
    vote_score[top] += row[top];
    for (std::size_t j = 0; j < g; ++j) mean_sim[j] += row[j];
  }
  std::vector<std::size_t> order(g);
  for (std::size_t j = 0; j < g; ++j) order[j] = j;
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    if (votes[a] != votes[b]) return votes[a] > votes[b];
    if (votes[a] > 0) {
      const double ma = vote_score[a] / static_cast<double>(votes[a]);
      const double mb = vote_score[b] / static_cast<double>(votes[b]);
      if (ma != mb) return ma > mb;
    }
    if (mean_sim[a] != mean_sim[b]) return mean_sim[a] > mean_sim[b];
    return gallery.label_ids[a] < gallery.label_ids[b];
  });
  std::vector<int> ranked;
  ranked.reserve(g);
  for (auto j : order) ranked.push_back(gallery.label_ids[j]);
  return ranked;
}

struct ScanRecall {
  double r1 = 0.0, r5 = 0.0, r10 = 0.0;
  std::size_t scans = 0;
};

// Slices grouped by scan key; every slice of a scan must carry the same label.
inline ScanRecall scan_to_text_recall(const Tensor& images, std::span<const int> labels,
                                      std::span<const std::string> scan_keys,
                                      const Gallery& gallery) {
  if (gallery.label_ids.empty()) throw Error(ErrorKind::EmptyGallery);
  std::map<std::string, std::vector<std::size_t>> scans;
  for (std::size_t i = 0; i < scan_keys.size(); ++i) scans[scan_keys[i]].push_back(i);
  ScanRecall out;
  out.scans = scans.size();
  if (scans.empty()) return out;
  std::size_t h1 = 0, h5 = 0, h10 = 0;
  for (const auto& [key, members] : scans) {
    Tensor scan_images(members.size(), images.cols());
    for (std::size_t s = 0; s < members.size(); ++s) {
      std::copy(images.row(members[s]).begin(), images.row(members[s]).end(),
                scan_images.row(s).begin());
    }
    const auto ranked = rank_scan(similarity_matrix(scan_images, gallery.embeddings), gallery);
    const int truth = labels[members.front()];
    const auto pos = std::find(ranked.begin(), ranked.end(), truth) - ranked.begin();
    h1 += pos < 1;
    h5 += pos < 5;
    h10 += pos < 10;
  }
  const double n = static_cast<double>(scans.size());
  out.r1 = static_cast<double>(h1) / n;
  out.r5 = static_cast<double>(h5) / n;
  out.r10 = static_cast<double>(h10) / n;
  return out;
}

struct ProbeResult {
  double accuracy = 0.0;
  std::vector<int> predictions;   // one per test row
  std::vector<double> loss_history;
  int iterations = 0;
};

inline constexpr int kProbeMaxIterations = 500;
inline constexpr double kProbeGradientTolerance = 1e-6;

namespace detail {

// Per-column z-scoring with statistics taken from `reference`.
inline std::pair<Tensor, Tensor> standardize(const Tensor& reference, const Tensor& other) {
  const std::size_t n = reference.rows(), d = reference.cols();
  std::vector<double> mean(d, 0.0), scale(d, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t k = 0; k < d; ++k) mean[k] += reference(i, k);
  }
  for (auto& m : mean) m /= static_cast<double>(std::max<std::size_t>(n, 1));
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t k = 0; k < d; ++k) scale[k] += (reference(i, k) - mean[k]) * (reference(i, k) - mean[k]);
  }
  for (auto& s : scale) {
    s = std::sqrt(s / static_cast<double>(std::max<std::size_t>(n, 1)));
    s = s > 1e-12 ? 1.0 / s : 1.0;
  }
  auto apply = [&](const Tensor& x) {
    Tensor out(x.rows(), x.cols());
    for (std::size_t i = 0; i < x.rows(); ++i) {
      for (std::size_t k = 0; k < d; ++k) out(i, k) = (x(i, k) - mean[k]) * scale[k];
    }
    return out;
  };
  return {apply(reference), apply(other)};
}

}  // namespace detail

// Multinomial logistic regression (with intercept) on z-scored inputs by
// full-batch gradient descent with an L2 penalty on the weights. The step size
// follows a backtracking (Armijo) search so every accepted step lowers the
// objective.
inline ProbeResult linear_probe(const Tensor& raw_train_x, std::span<const int> train_y,
                                const Tensor& raw_test_x, std::span<const int> test_y, double l2) {
  if (raw_train_x.cols() != raw_test_x.cols() && raw_test_x.rows() > 0) {
    throw Error(ErrorKind::ShapeMismatch, "probe feature widths differ");
  }
  const auto [train_x, test_x] = detail::standardize(raw_train_x, raw_test_x);
  if (train_x.rows() != train_y.size() || test_x.rows() != test_y.size()) {
    throw Error(ErrorKind::ShapeMismatch, "probe labels");
  }
  std::vector<int> classes(train_y.begin(), train_y.end());
  std::sort(classes.begin(), classes.end());
  classes.erase(std::unique(classes.begin(), classes.end()), classes.end());
  if (classes.size() < 2) throw Error(ErrorKind::SingleClassTrainingSet);

  const std::size_t n = train_x.rows(), d = train_x.cols(), c = classes.size();
  std::vector<std::size_t> target(n);
  for (std::size_t i = 0; i < n; ++i) {
    target[i] = static_cast<std::size_t>(
        std::lower_bound(classes.begin(), classes.end(), train_y[i]) - classes.begin());
  }

  // Row k < d holds feature weights, row d the intercept.
  Tensor weights(d + 1, c), grad(d + 1, c), trial(d + 1, c), probs(n, c);
  auto objective = [&](const Tensor& w, bool keep_probs) {
    double loss = 0.0;
    std::vector<double> logits(c);
    for (std::size_t i = 0; i < n; ++i) {
      const auto x = train_x.row(i);
      const auto bias = w.row(d);
      std::copy(bias.begin(), bias.end(), logits.begin());
      for (std::size_t k = 0; k < d; ++k) {
        const double a = x[k];
        const auto wr = w.row(k);
        for (std::size_t j = 0; j < c; ++j) logits[j] += a * wr[j];
      }
      const double max_logit = *std::max_element(logits.begin(), logits.end());
      double z = 0.0;
      for (double v : logits) z += std::exp(v - max_logit);
      const double log_z = max_logit + std::log(z);
      loss += log_z - logits[target[i]];
      if (keep_probs) {
        auto pr = probs.row(i);
        for (std::size_t j = 0; j < c; ++j) pr[j] = std::exp(logits[j] - log_z);
      }
    }
    double penalty = 0.0;
    for (std::size_t k = 0; k < d; ++k) penalty += dot(w.row(k), w.row(k));
    return loss / static_cast<double>(n) + 0.5 * l2 * penalty;
  };
  auto gradient = [&](const Tensor& w) {
    grad.fill(0.0);
    const double inv_n = 1.0 / static_cast<double>(n);
    for (std::size_t i = 0; i < n; ++i) {
      auto pr = probs.row(i);
      pr[target[i]] -= 1.0;
      const auto x = train_x.row(i);
      for (std::size_t k = 0; k < d; ++k) {
        const double a = x[k] * inv_n;
        auto gr = grad.row(k);
        for (std::size_t j = 0; j < c; ++j) gr[j] += a * pr[j];
      }
      auto gb = grad.row(d);
      for (std::size_t j = 0; j < c; ++j) gb[j] += pr[j] * inv_n;
    }
    for (std::size_t k = 0; k < d; ++k) {
      for (std::size_t j = 0; j < c; ++j) grad(k, j) += l2 * w(k, j);
    }
  };

  ProbeResult result;
  double loss = objective(weights, true);
  result.loss_history.push_back(loss);
  double step = 1.0;
  for (int iter = 0; iter < kProbeMaxIterations; ++iter) {
    gradient(weights);
    const double grad_sq = dot(grad.data(), grad.data());
    if (std::sqrt(grad_sq) < kProbeGradientTolerance) break;
    step *= 2.0;
    double trial_loss = 0.0;
    bool accepted = false;
    for (int halving = 0; halving < 60; ++halving) {
      for (std::size_t k = 0; k < trial.size(); ++k) trial[k] = weights[k] - step * grad[k];
      trial_loss = objective(trial, true);
      if (trial_loss <= loss - 1e-4 * step * grad_sq) {
        accepted = true;
        break;
      }
      step *= 0.5;
    }
    if (!accepted) {
      objective(weights, true);
      break;
    }
    std::swap(weights, trial);
    loss = trial_loss;
    result.loss_history.push_back(loss);
    result.iterations = iter + 1;
  }

  std::size_t correct = 0;
  std::vector<double> logits(c);
  for (std::size_t i = 0; i < test_x.rows(); ++i) {
    const auto x = test_x.row(i);
    for (std::size_t j = 0; j < c; ++j) {
      double v = weights(d, j);
      for (std::size_t k = 0; k < d; ++k) v += x[k] * weights(k, j);
      logits[j] = v;
    }
    const auto best = static_cast<std::size_t>(
        std::max_element(logits.begin(), logits.end()) - logits.begin());
    result.predictions.push_back(classes[best]);
    correct += classes[best] == test_y[i];
  }
  result.accuracy =
      test_x.rows() == 0 ? 0.0 : static_cast<double>(correct) / static_cast<double>(test_x.rows());
  return result;
}

struct TagErrors {
  std::map<std::string, double> rates;  // key field -> mismatch fraction
  std::optional<double> te_bin_mae, tr_bin_mae;
  std::optional<double> te_bin_mae_ms, tr_bin_mae_ms;
};

// Decodes predicted and true label ids through `space` and compares each key
// element; TE/TR also report mean absolute bin distance, in bins and in ms.
inline TagErrors per_tag_error(std::span<const int> predicted, std::span<const int> truth,
                               const LabelSpace& space) {
  if (predicted.size() != truth.size()) throw Error(ErrorKind::ShapeMismatch, "prediction count");
  const auto names = space.part_names();
  TagErrors out;
  std::vector<std::size_t> mismatches(names.size(), 0);
  double te_sum = 0.0, tr_sum = 0.0;
  std::optional<std::size_t> te_pos, tr_pos;
  for (std::size_t p = 0; p < names.size(); ++p) {
    if (names[p] == "te_bin") te_pos = p;
    if (names[p] == "tr_bin") tr_pos = p;
  }
  for (std::size_t i = 0; i < truth.size(); ++i) {
    const auto& a = space.label(predicted[i]).key;
    const auto& b = space.label(truth[i]).key;
    if (a.size() != names.size() || b.size() != names.size()) {
      throw Error(ErrorKind::LabelDecodeFailure, "key arity");
    }
    for (std::size_t p = 0; p < names.size(); ++p) mismatches[p] += a[p] != b[p];
    if (te_pos) te_sum += std::abs(static_cast<double>(std::get<std::int64_t>(a[*te_pos]) -
                                                       std::get<std::int64_t>(b[*te_pos])));
    if (tr_pos) tr_sum += std::abs(static_cast<double>(std::get<std::int64_t>(a[*tr_pos]) -
                                                       std::get<std::int64_t>(b[*tr_pos])));
  }
  const double n = truth.empty() ? 1.0 : static_cast<double>(truth.size());
  for (std::size_t p = 0; p < names.size(); ++p) {
    out.rates[names[p]] = truth.empty() ? 0.0 : static_cast<double>(mismatches[p]) / n;
  }
  if (const auto grid = space.te_tr_grid()) {
    if (te_pos) {
      out.te_bin_mae = te_sum / n;
      out.te_bin_mae_ms = *out.te_bin_mae * grid->te_width();
    }
    if (tr_pos) {
      out.tr_bin_mae = tr_sum / n;
      out.tr_bin_mae_ms = *out.tr_bin_mae * grid->tr_width();
    }
  }
  return out;
}

}  // namespace mrclip
