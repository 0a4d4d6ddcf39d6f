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

// Tape-based reverse-mode differentiation over rank-2 tensors. Nodes are
// appended in evaluation order, so walking the tape backwards is a valid
// topological order.

#pragma once

#include <cmath>
#include <cstdint>
#include <functional>
#include <span>
#include <vector>

#include "mrclip/contrastive_loss.hpp"
#include "mrclip/error.hpp"
#include "mrclip/tensor.hpp"

namespace mrclip {

struct Var {
  std::size_t id = 0;
};

using TokenLists = std::vector<std::vector<std::int64_t>>;

class Graph {
 public:
  Var parameter(Tensor value) { return push(std::move(value), true); }
  Var constant(Tensor value) { return push(std::move(value), false); }

  const Tensor& value(Var v) const { return nodes_[v.id].value; }

  // Zero-filled when the node never received a gradient.
  const Tensor& grad(Var v) {
    Node& node = nodes_[v.id];
    if (node.grad.empty()) node.grad = Tensor(node.value.shape(), 0.0);
    return node.grad;
  }

  bool requires_grad(Var v) const { return nodes_[v.id].requires_grad; }

  // x: N x in, weight: in x out, bias: 1 x out.
  Var linear(Var x, Var weight, Var bias) {
    const Tensor& xv = value(x);
    const Tensor& wv = value(weight);
    const Tensor& bv = value(bias);
    if (xv.cols() != wv.rows() || bv.rows() != 1 || bv.cols() != wv.cols()) {
      throw Error(ErrorKind::ShapeMismatch, "linear");
    }
    const std::size_t n = xv.rows(), in = wv.rows(), out = wv.cols();
    Tensor y(n, out);
    for (std::size_t r = 0; r < n; ++r) {
      auto yr = y.row(r);
      for (std::size_t c = 0; c < out; ++c) yr[c] = bv[c];
      const auto xr = xv.row(r);
      for (std::size_t k = 0; k < in; ++k) {
        const double a = xr[k];
        const auto wr = wv.row(k);
        for (std::size_t c = 0; c < out; ++c) yr[c] += a * wr[c];
      }
    }
    return push_op(std::move(y), {x, weight, bias}, [x, weight, bias](Graph& g, const Tensor& gy) {
      const Tensor& xv = g.value(x);
      const Tensor& wv = g.value(weight);
      const std::size_t n = xv.rows(), in = wv.rows(), out = wv.cols();
      if (g.requires_grad(x)) {
        Tensor& gx = g.grad_buffer(x);
        for (std::size_t r = 0; r < n; ++r) {
          const auto gr = gy.row(r);
          auto gxr = gx.row(r);
          for (std::size_t k = 0; k < in; ++k) gxr[k] += dot(gr, wv.row(k));
        }
      }
      if (g.requires_grad(weight)) {
        Tensor& gw = g.grad_buffer(weight);
        for (std::size_t r = 0; r < n; ++r) {
          const auto xr = xv.row(r);
          const auto gr = gy.row(r);
          for (std::size_t k = 0; k < in; ++k) {
            const double a = xr[k];
            if (a == 0.0) continue;
            auto gwr = gw.row(k);
            for (std::size_t c = 0; c < out; ++c) gwr[c] += a * gr[c];
          }
        }
      }
      if (g.requires_grad(bias)) {
        Tensor& gb = g.grad_buffer(bias);
        for (std::size_t r = 0; r < n; ++r) {
          const auto gr = gy.row(r);
          for (std::size_t c = 0; c < out; ++c) gb[c] += gr[c];
        }
      }
    });
  }

  // x * sigmoid(x), elementwise.
  Var silu(Var x) {
    const Tensor& xv = value(x);
    Tensor y(xv.shape(), 0.0);
    for (std::size_t i = 0; i < xv.size(); ++i) y[i] = xv[i] / (1.0 + std::exp(-xv[i]));
    return push_op(std::move(y), {x}, [x](Graph& g, const Tensor& gy) {
      const Tensor& xv = g.value(x);
      Tensor& gx = g.grad_buffer(x);
      for (std::size_t i = 0; i < xv.size(); ++i) {
        const double s = 1.0 / (1.0 + std::exp(-xv[i]));
        gx[i] += gy[i] * s * (1.0 + xv[i] * (1.0 - s));
      }
    });
  }

  // Each row divided by its L2 norm.
  Var normalize_rows(Var x) {
    const Tensor& xv = value(x);
    Tensor y(xv.shape(), 0.0);
    std::vector<double> norms(xv.rows());
    for (std::size_t r = 0; r < xv.rows(); ++r) {
      norms[r] = l2_norm(xv.row(r));
      const double inv = norms[r] > 0.0 ? 1.0 / norms[r] : 0.0;
      auto yr = y.row(r);
      const auto xr = xv.row(r);
      for (std::size_t c = 0; c < xv.cols(); ++c) yr[c] = xr[c] * inv;
    }
    const std::size_t out_id = nodes_.size();
    return push_op(std::move(y), {x}, [x, out_id, norms = std::move(norms)](Graph& g,
                                                                           const Tensor& gy) {
      const Tensor& yv = g.nodes_[out_id].value;
      Tensor& gx = g.grad_buffer(x);
      for (std::size_t r = 0; r < yv.rows(); ++r) {
        if (norms[r] <= 0.0) continue;
        const auto yr = yv.row(r);
        const auto gr = gy.row(r);
        const double proj = dot(gr, yr);
        auto gxr = gx.row(r);
        for (std::size_t c = 0; c < yv.cols(); ++c) gxr[c] += (gr[c] - proj * yr[c]) / norms[r];
      }
    });
  }

  // Mean of table rows per token list; an empty list takes the null row.
  Var embedding_bag(Var table, Var null_row, const TokenLists& tokens) {
    const Tensor& tv = value(table);
    const Tensor& nv = value(null_row);
    if (nv.rows() != 1 || nv.cols() != tv.cols()) throw Error(ErrorKind::ShapeMismatch, "null row");
    const std::size_t vocab = tv.rows(), dim = tv.cols();
    for (const auto& list : tokens) {
      for (auto id : list) {
        if (id < 0 || static_cast<std::size_t>(id) >= vocab) {
          throw Error(ErrorKind::TokenIdOutOfRange, std::to_string(id));
        }
      }
    }
    Tensor y(tokens.size(), dim);
    for (std::size_t r = 0; r < tokens.size(); ++r) {
      auto yr = y.row(r);
      if (tokens[r].empty()) {
        for (std::size_t c = 0; c < dim; ++c) yr[c] = nv[c];
        continue;
      }
      for (auto id : tokens[r]) {
        const auto tr = tv.row(static_cast<std::size_t>(id));
        for (std::size_t c = 0; c < dim; ++c) yr[c] += tr[c];
      }
      const double inv = 1.0 / static_cast<double>(tokens[r].size());
      for (std::size_t c = 0; c < dim; ++c) yr[c] *= inv;
    }
    return push_op(std::move(y), {table, null_row},
                   [table, null_row, tokens](Graph& g, const Tensor& gy) {
                     const std::size_t dim = gy.cols();
                     for (std::size_t r = 0; r < tokens.size(); ++r) {
                       const auto gr = gy.row(r);
                       if (tokens[r].empty()) {
                         if (!g.requires_grad(null_row)) continue;
                         Tensor& gn = g.grad_buffer(null_row);
                         for (std::size_t c = 0; c < dim; ++c) gn[c] += gr[c];
                         continue;
                       }
                       if (!g.requires_grad(table)) continue;
                       Tensor& gt = g.grad_buffer(table);
                       const double inv = 1.0 / static_cast<double>(tokens[r].size());
                       for (auto id : tokens[r]) {
                         auto gtr = gt.row(static_cast<std::size_t>(id));
                         for (std::size_t c = 0; c < dim; ++c) gtr[c] += gr[c] * inv;
                       }
                     }
                   });
  }

  // Scalar contrastive loss; tau = exp(log_temperature).
  Var contrastive(Var images, Var texts, Var log_temperature, std::vector<int> labels,
                  LossKind kind, const ShardPlan& plan) {
    const double tau = std::exp(value(log_temperature).item());
    const ContrastiveBatch batch{value(images), value(texts), labels, tau};
    auto result = sharded_loss(batch, plan, kind);
    const double loss = result.loss;
    return push_op(Tensor::scalar(loss), {images, texts, log_temperature},
                   [images, texts, log_temperature, tau, result = std::move(result)](
                       Graph& g, const Tensor& gy) {
                     const double up = gy.item();
                     if (g.requires_grad(images)) {
                       Tensor& gi = g.grad_buffer(images);
                       for (std::size_t k = 0; k < gi.size(); ++k) gi[k] += up * result.d_images[k];
                     }
                     if (g.requires_grad(texts)) {
                       Tensor& gt = g.grad_buffer(texts);
                       for (std::size_t k = 0; k < gt.size(); ++k) gt[k] += up * result.d_texts[k];
                     }
                     if (g.requires_grad(log_temperature)) {
                       g.grad_buffer(log_temperature)[0] += up * result.d_temperature * tau;
                     }
                   });
  }

  // sum(x * weights) with constant weights; reduces any node to a scalar.
  Var weighted_sum(Var x, Tensor weights) {
    require_same_shape(value(x), weights, "weighted_sum");
    const double total = dot(value(x).data(), weights.data());
    return push_op(Tensor::scalar(total), {x},
                   [x, weights = std::move(weights)](Graph& g, const Tensor& gy) {
                     Tensor& gx = g.grad_buffer(x);
                     for (std::size_t k = 0; k < gx.size(); ++k) gx[k] += gy.item() * weights[k];
                   });
  }

  // 0.5 * ||x||^2.
  Var half_squared_norm(Var x) {
    const double total = 0.5 * dot(value(x).data(), value(x).data());
    return push_op(Tensor::scalar(total), {x}, [x](Graph& g, const Tensor& gy) {
      const Tensor& xv = g.value(x);
      Tensor& gx = g.grad_buffer(x);
      for (std::size_t k = 0; k < gx.size(); ++k) gx[k] += gy.item() * xv[k];
    });
  }

  // Reverse sweep from a scalar node. Every reached gradient must be finite.
  void backward(Var loss) {
    if (value(loss).size() != 1) throw Error(ErrorKind::ShapeMismatch, "backward needs a scalar");
    grad_buffer(loss)[0] = 1.0;
    for (std::size_t id = loss.id + 1; id-- > 0;) {
      Node& node = nodes_[id];
      if (!node.backward || node.grad.empty()) continue;
      if (!node.grad.all_finite()) throw Error(ErrorKind::NonFiniteGradient);
      node.backward(*this, node.grad);
    }
    for (const auto& node : nodes_) {
      if (node.requires_grad && !node.grad.empty() && !node.grad.all_finite()) {
        throw Error(ErrorKind::NonFiniteGradient);
      }
    }
  }

 private:
  using Backward = std::function<void(Graph&, const Tensor&)>;

  struct Node {
    Tensor value;
    Tensor grad;
    bool requires_grad = false;
    Backward backward;
  };

  Tensor& grad_buffer(Var v) {
    Node& node = nodes_[v.id];
    if (node.grad.empty()) node.grad = Tensor(node.value.shape(), 0.0);
    return node.grad;
  }

  Var push(Tensor value, bool requires_grad) {
    nodes_.push_back(Node{std::move(value), Tensor{}, requires_grad, nullptr});
    return Var{nodes_.size() - 1};
  }

  Var push_op(Tensor value, std::initializer_list<Var> inputs, Backward backward) {
    if (!value.all_finite()) throw Error(ErrorKind::NonFiniteGradient, "non-finite forward value");
    bool needs = false;
    for (auto in : inputs) needs = needs || nodes_[in.id].requires_grad;
    nodes_.push_back(Node{std::move(value), Tensor{}, needs, needs ? std::move(backward) : nullptr});
    return Var{nodes_.size() - 1};
  }

  std::vector<Node> nodes_;
};

}  // namespace mrclip
