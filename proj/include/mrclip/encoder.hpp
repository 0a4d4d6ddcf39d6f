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
#include <string>
#include <vector>

#include "mrclip/autograd.hpp"
#include "mrclip/prompt.hpp"
#include "mrclip/tensor.hpp"
#include "mrclip/util.hpp"

namespace mrclip {

struct EncoderDims {
  std::size_t d_in = 12;
  std::size_t hidden = 64;
  std::size_t d_emb = 32;
  std::size_t d_tok = 32;
  std::size_t vocab = kDefaultVocabSize;

  bool operator==(const EncoderDims&) const = default;
};

inline constexpr double kMinTemperature = 0.01;
inline constexpr double kMaxTemperature = 1.0;
inline constexpr double kInitTemperature = 0.07;

struct Parameter {
  std::string name;
  Tensor value;
  bool decay = true;  // decoupled weight decay applies
};

// Image MLP [d_in, hidden, d_emb] and text embedding bag -> MLP [d_tok, hidden,
// d_emb], both ending in L2 normalization, plus a learnable log temperature.
class DualEncoder {
 public:
  enum Slot : std::size_t {
    kImageW1, kImageB1, kImageW2, kImageB2,
    kTextTable, kTextNull, kTextW1, kTextB1, kTextW2, kTextB2,
    kLogTemperature,
    kSlotCount,
  };

  struct Bound {
    std::vector<Var> vars;
    Var operator[](std::size_t slot) const { return vars[slot]; }
  };

  DualEncoder() = default;

  static DualEncoder init(const EncoderDims& dims, std::uint64_t seed,
                          double temperature = kInitTemperature) {
    DualEncoder model;
    model.dims_ = dims;
    Rng rng(seed);
    auto glorot = [&](std::size_t in, std::size_t out) {
      Tensor w(in, out);
      const double a = std::sqrt(6.0 / static_cast<double>(in + out));
      for (auto& v : w.data()) v = rng.uniform(-a, a);
      return w;
    };
    auto gaussian = [&](std::size_t rows, std::size_t cols) {
      Tensor t(rows, cols);
      for (auto& v : t.data()) v = rng.normal();
      return t;
    };
    auto& p = model.params_;
    p.push_back({"image.w1", glorot(dims.d_in, dims.hidden), true});
    p.push_back({"image.b1", Tensor(1, dims.hidden), false});
    p.push_back({"image.w2", glorot(dims.hidden, dims.d_emb), true});
    p.push_back({"image.b2", Tensor(1, dims.d_emb), false});
    p.push_back({"text.table", gaussian(dims.vocab, dims.d_tok), true});
    p.push_back({"text.null", gaussian(1, dims.d_tok), false});
    p.push_back({"text.w1", glorot(dims.d_tok, dims.hidden), true});
    p.push_back({"text.b1", Tensor(1, dims.hidden), false});
    p.push_back({"text.w2", glorot(dims.hidden, dims.d_emb), true});
    p.push_back({"text.b2", Tensor(1, dims.d_emb), false});
    p.push_back({"log_temperature", Tensor::scalar(std::log(temperature)), false});
    model.clamp_temperature();
    return model;
  }

  const EncoderDims& dims() const { return dims_; }
  std::vector<Parameter>& parameters() { return params_; }
  const std::vector<Parameter>& parameters() const { return params_; }
  Parameter& parameter(Slot slot) { return params_[slot]; }
  const Parameter& parameter(Slot slot) const { return params_[slot]; }

  double temperature() const {
    return std::clamp(std::exp(params_[kLogTemperature].value.item()), kMinTemperature,
                      kMaxTemperature);
  }

  void clamp_temperature() {
    double& log_t = params_[kLogTemperature].value[0];
    log_t = std::clamp(log_t, std::log(kMinTemperature), std::log(kMaxTemperature));
  }

  Bound bind(Graph& graph) const {
    Bound bound;
    for (const auto& p : params_) bound.vars.push_back(graph.parameter(p.value));
    return bound;
  }

  Var encode_images(Graph& graph, const Bound& b, Var features) const {
    if (graph.value(features).cols() != dims_.d_in) {
      throw Error(ErrorKind::ShapeMismatch, "image features must have d_in columns");
    }
    const Var hidden = graph.silu(graph.linear(features, b[kImageW1], b[kImageB1]));
    return graph.normalize_rows(graph.linear(hidden, b[kImageW2], b[kImageB2]));
  }

  Var encode_texts(Graph& graph, const Bound& b, const TokenLists& tokens) const {
    const Var pooled = graph.embedding_bag(b[kTextTable], b[kTextNull], tokens);
    const Var hidden = graph.silu(graph.linear(pooled, b[kTextW1], b[kTextB1]));
    return graph.normalize_rows(graph.linear(hidden, b[kTextW2], b[kTextB2]));
  }

  // Inference helpers: forward only, no tape kept.
  Tensor encode_images(const Tensor& features) const {
    Graph graph;
    const Bound b = bind_constants(graph);
    return graph.value(encode_images(graph, b, graph.constant(features)));
  }

  Tensor encode_texts(const TokenLists& tokens) const {
    Graph graph;
    const Bound b = bind_constants(graph);
    return graph.value(encode_texts(graph, b, tokens));
  }

 private:
  Bound bind_constants(Graph& graph) const {
    Bound bound;
    for (const auto& p : params_) bound.vars.push_back(graph.constant(p.value));
    return bound;
  }

  EncoderDims dims_;
  std::vector<Parameter> params_;
};

}  // namespace mrclip
