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

#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <functional>
#include <iterator>
#include <numeric>
#include <string>
#include <vector>

#include "mrclip/autograd.hpp"
#include "mrclip/contrastive_loss.hpp"
#include "mrclip/dataset.hpp"
#include "mrclip/encoder.hpp"
#include "mrclip/label_space.hpp"
#include "mrclip/optimizer.hpp"
#include "mrclip/prompt.hpp"

namespace mrclip {

inline std::string_view to_string(LossKind kind) {
  return kind == LossKind::SupCon ? "supcon" : "infonce";
}

inline LossKind parse_loss_kind(std::string_view name) {
  if (name == "supcon") return LossKind::SupCon;
  if (name == "infonce") return LossKind::InfoNCE;
  throw Error(ErrorKind::InvalidConfig, "loss must be supcon or infonce");
}

// Everything that determines a training run. Output locations are not part of
// it, so identical runs written to different directories hash the same.
struct RunConfig {
  std::string dataset;
  std::string labels;
  PromptConfig prompt{.include_series_description = true,
                      .numerical_only = false,
                      .dropout_prob = 0.2,
                      .seed = 0};
  EncoderDims dims;
  AdamConfig adam{.lr = 5e-2, .beta1 = 0.9, .beta2 = 0.98, .eps = 1e-8, .weight_decay = 1e-3,
                  .warmup_steps = 20};
  bool cosine_schedule = true;  // decay to zero over all epochs after warmup
  double init_temperature = kInitTemperature;
  std::size_t batch_size = 256;
  int epochs = 20;
  std::size_t shards = 1;
  LossKind loss = LossKind::SupCon;
  std::uint64_t seed = 0;
  double holdout_fraction = 0.3;
  std::uint64_t split_seed = 17;
  double probe_l2 = 1e-4;

  json to_json() const {
    return {
        {"dataset", dataset},
        {"labels", labels},
        {"prompt", detail::prompt_config_to_json(prompt)},
        {"dims",
         {{"d_in", dims.d_in},
          {"hidden", dims.hidden},
          {"d_emb", dims.d_emb},
          {"d_tok", dims.d_tok},
          {"vocab", dims.vocab}}},
        {"adam",
         {{"lr", adam.lr},
          {"beta1", adam.beta1},
          {"beta2", adam.beta2},
          {"eps", adam.eps},
          {"weight_decay", adam.weight_decay},
          {"warmup_steps", adam.warmup_steps}}},
        {"cosine_schedule", cosine_schedule},
        {"init_temperature", init_temperature},
        {"batch_size", batch_size},
        {"epochs", epochs},
        {"shards", shards},
        {"loss", std::string(to_string(loss))},
        {"seed", seed},
        {"holdout_fraction", holdout_fraction},
        {"split_seed", split_seed},
        {"probe_l2", probe_l2},
    };
  }

  static RunConfig from_json(const json& j) {
    try {
      RunConfig c;
      c.dataset = j.at("dataset").get<std::string>();
      c.labels = j.at("labels").get<std::string>();
      c.prompt = detail::prompt_config_from_json(j.at("prompt"));
      const auto& d = j.at("dims");
      c.dims = {d.at("d_in").get<std::size_t>(), d.at("hidden").get<std::size_t>(),
                d.at("d_emb").get<std::size_t>(), d.at("d_tok").get<std::size_t>(),
                d.at("vocab").get<std::size_t>()};
      const auto& a = j.at("adam");
      c.adam = {a.at("lr").get<double>(),           a.at("beta1").get<double>(),
                a.at("beta2").get<double>(),        a.at("eps").get<double>(),
                a.at("weight_decay").get<double>(), a.at("warmup_steps").get<std::int64_t>()};
      c.cosine_schedule = j.at("cosine_schedule").get<bool>();
      c.init_temperature = j.at("init_temperature").get<double>();
      c.batch_size = j.at("batch_size").get<std::size_t>();
      c.epochs = j.at("epochs").get<int>();
      c.shards = j.at("shards").get<std::size_t>();
      c.loss = parse_loss_kind(j.at("loss").get<std::string>());
      c.seed = j.at("seed").get<std::uint64_t>();
      c.holdout_fraction = j.at("holdout_fraction").get<double>();
      c.split_seed = j.at("split_seed").get<std::uint64_t>();
      c.probe_l2 = j.at("probe_l2").get<double>();
      return c;
    } catch (const json::exception& e) {
      throw Error(ErrorKind::MalformedJson, std::string("run config: ") + e.what());
    }
  }

  std::string hash() const { return to_hex(fnv1a64(to_json().dump())); }
};

struct TrainingState {
  DualEncoder model;
  OptimizerState optimizer;
  Rng rng;
  int epochs_completed = 0;
  std::string label_space_hash;
};

struct StepLog {
  std::int64_t step = 0;
  double loss = 0.0;
  double lr_eff = 0.0;
  double tau = 0.0;
  double grad_norm = 0.0;

  json to_json() const {
    return {{"step", step}, {"loss", loss}, {"lr_eff", lr_eff}, {"tau", tau}, {"grad_norm", grad_norm}};
  }
};

inline std::int64_t steps_per_epoch(const RunConfig& config, std::size_t n_train) {
  const std::size_t batch = std::max<std::size_t>(1, config.batch_size);
  return static_cast<std::int64_t>((n_train + batch - 1) / batch);
}

inline TrainingState init_training(const RunConfig& config, const LabelSpace& space,
                                   std::size_t n_train) {
  if (config.batch_size == 0 || config.epochs < 0 || config.shards == 0) {
    throw Error(ErrorKind::InvalidConfig, "batch_size and shards must be >= 1, epochs >= 0");
  }
  TrainingState state;
  state.model = DualEncoder::init(config.dims, derive_seed(config.seed, 1), config.init_temperature);
  AdamConfig adam = config.adam;
  if (config.cosine_schedule) adam.total_steps = config.epochs * steps_per_epoch(config, n_train);
  state.optimizer = make_optimizer(adam, state.model.parameters());
  state.rng = Rng(derive_seed(config.seed, 2));
  state.label_space_hash = space.hash();
  return state;
}

// One optimizer step on a batch. Returns the logged quantities.
inline StepLog train_step(TrainingState& state, const RunConfig& config, const Tensor& features,
                          const TokenLists& tokens, std::vector<int> labels) {
  Graph graph;
  const auto bound = state.model.bind(graph);
  const Var images = state.model.encode_images(graph, bound, graph.constant(features));
  const Var texts = state.model.encode_texts(graph, bound, tokens);
  const Var loss = graph.contrastive(images, texts, bound[DualEncoder::kLogTemperature],
                                     std::move(labels), config.loss,
                                     ShardPlan::even(features.rows(), config.shards));
  graph.backward(loss);

  std::vector<Tensor> grads;
  double grad_sq = 0.0;
  for (std::size_t p = 0; p < bound.vars.size(); ++p) {
    grads.push_back(graph.grad(bound.vars[p]));
    grad_sq += dot(grads.back().data(), grads.back().data());
  }
  StepLog log;
  log.loss = graph.value(loss).item();
  log.grad_norm = std::sqrt(grad_sq);
  adam_step(state.model.parameters(), grads, state.optimizer);
  state.model.clamp_temperature();
  log.step = state.optimizer.step;
  log.lr_eff = effective_lr(state.optimizer.config, state.optimizer.step);
  log.tau = state.model.temperature();
  return log;
}

// One pass over `train` in an order drawn from the state's generator. Each
// sample's text dropout uses its own seed drawn from the same generator.
inline void train_epoch(TrainingState& state, const RunConfig& config,
                        const std::vector<SyntheticSlice>& train, std::span<const int> labels,
                        const std::function<void(const StepLog&)>& on_step = {}) {
  if (train.empty()) throw Error(ErrorKind::EmptyDataset, "no training slices");
  std::vector<std::size_t> order(train.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  state.rng.shuffle(order.begin(), order.end());

  const std::size_t batch = std::max<std::size_t>(1, config.batch_size);
  for (std::size_t start = 0; start < order.size(); start += batch) {
    const std::size_t end = std::min(order.size(), start + batch);
    const std::size_t n = end - start;
    Tensor features(n, config.dims.d_in);
    TokenLists tokens;
    std::vector<int> batch_labels;
    for (std::size_t i = 0; i < n; ++i) {
      const auto& slice = train[order[start + i]];
      if (slice.feature.size() != config.dims.d_in) {
        throw Error(ErrorKind::ShapeMismatch, "slice feature size differs from d_in");
      }
      std::copy(slice.feature.begin(), slice.feature.end(), features.row(i).begin());
      PromptConfig prompt = config.prompt;
      prompt.seed = state.rng.next();
      tokens.push_back(render_prompt(slice.record, prompt, config.dims.vocab).token_ids);
      batch_labels.push_back(labels[order[start + i]]);
    }
    const auto log = train_step(state, config, features, tokens, std::move(batch_labels));
    if (on_step) on_step(log);
  }
  ++state.epochs_completed;
}

// Binary checkpoint: magic, version, JSON header, then raw little-endian
// float64 blocks (parameter, first moment, second moment) per parameter in
// header order.
inline constexpr char kCheckpointMagic[8] = {'M', 'R', 'C', 'L', 'I', 'P', 'C', 'K'};
inline constexpr std::uint32_t kCheckpointVersion = 1;

struct Checkpoint {
  RunConfig config;
  TrainingState state;
};

namespace detail {

inline void append_doubles(std::string& out, std::span<const double> values) {
  const auto* bytes = reinterpret_cast<const char*>(values.data());
  out.append(bytes, values.size() * sizeof(double));
}

template <typename T>
void append_pod(std::string& out, T value) {
  out.append(reinterpret_cast<const char*>(&value), sizeof(T));
}

}  // namespace detail

inline std::string serialize_checkpoint(const RunConfig& config, const TrainingState& state) {
  json params = json::array();
  for (const auto& p : state.model.parameters()) {
    params.push_back({{"name", p.name}, {"shape", p.value.shape()}, {"decay", p.decay}});
  }
  const json header = {
      {"format", "mrclip-checkpoint"},
      {"config", config.to_json()},
      {"config_hash", config.hash()},
      {"label_space_hash", state.label_space_hash},
      {"params", params},
      {"optimizer_step", state.optimizer.step},
      {"schedule_total_steps", state.optimizer.config.total_steps},
      {"rng_state", state.rng.state()},
      {"epochs_completed", state.epochs_completed},
  };
  const std::string text = header.dump();
  std::string out(kCheckpointMagic, sizeof(kCheckpointMagic));
  detail::append_pod(out, kCheckpointVersion);
  detail::append_pod(out, static_cast<std::uint64_t>(text.size()));
  out += text;
  const auto& ps = state.model.parameters();
  for (std::size_t i = 0; i < ps.size(); ++i) {
    detail::append_doubles(out, ps[i].value.data());
    detail::append_doubles(out, state.optimizer.m[i].data());
    detail::append_doubles(out, state.optimizer.v[i].data());
  }
  return out;
}

namespace detail {

inline Checkpoint parse_checkpoint(const std::string& bytes) {
  auto fail = [](const std::string& why) { return Error(ErrorKind::BadCheckpoint, why); };
  constexpr std::size_t prefix = sizeof(kCheckpointMagic) + 4 + 8;
  if (bytes.size() < prefix || std::memcmp(bytes.data(), kCheckpointMagic, 8) != 0) {
    throw fail("missing magic");
  }
  std::uint32_t version;
  std::uint64_t header_len;
  std::memcpy(&version, bytes.data() + 8, 4);
  std::memcpy(&header_len, bytes.data() + 12, 8);
  if (version != kCheckpointVersion) throw fail("unsupported version " + std::to_string(version));
  if (bytes.size() < prefix + header_len) throw fail("truncated header");
  json header = json::parse(bytes.substr(prefix, header_len), nullptr, false);
  if (header.is_discarded()) throw fail("header is not JSON");

  Checkpoint ckpt;
  ckpt.config = RunConfig::from_json(header.at("config"));
  auto& state = ckpt.state;
  state.model = DualEncoder::init(ckpt.config.dims, 0);
  state.optimizer = make_optimizer(ckpt.config.adam, state.model.parameters());
  state.optimizer.step = header.at("optimizer_step").get<std::int64_t>();
  state.optimizer.config.total_steps = header.at("schedule_total_steps").get<std::int64_t>();
  state.rng.set_state(header.at("rng_state").get<std::string>());
  state.epochs_completed = header.at("epochs_completed").get<int>();
  state.label_space_hash = header.at("label_space_hash").get<std::string>();

  auto& ps = state.model.parameters();
  const auto& names = header.at("params");
  if (names.size() != ps.size()) throw fail("parameter count differs");
  std::size_t offset = prefix + header_len;
  auto read_block = [&](Tensor& target) {
    const std::size_t n = target.size() * sizeof(double);
    if (bytes.size() < offset + n) throw fail("truncated parameter data");
    std::memcpy(target.data().data(), bytes.data() + offset, n);
    offset += n;
  };
  for (std::size_t i = 0; i < ps.size(); ++i) {
    if (names[i].at("name") != ps[i].name ||
        names[i].at("shape").get<std::vector<std::size_t>>() != ps[i].value.shape()) {
      throw fail("parameter layout differs at " + ps[i].name);
    }
    read_block(ps[i].value);
    read_block(state.optimizer.m[i]);
    read_block(state.optimizer.v[i]);
  }
  if (offset != bytes.size()) throw fail("trailing bytes");
  return ckpt;
}

}  // namespace detail

inline Checkpoint deserialize_checkpoint(const std::string& bytes) {
  try {
    return detail::parse_checkpoint(bytes);
  } catch (const json::exception& e) {
    throw Error(ErrorKind::BadCheckpoint, e.what());
  }
}

inline void save_checkpoint(const std::string& path, const RunConfig& config,
                            const TrainingState& state) {
  write_text(path, serialize_checkpoint(config, state));
}

inline Checkpoint load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorKind::Io, "cannot open " + path);
  std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return deserialize_checkpoint(bytes);
}

}  // namespace mrclip
