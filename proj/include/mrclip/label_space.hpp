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

// Grouped contrast-aware labels. Categorical tags group by exact value, TE and
// TR are quantized jointly on a grid (or clustered with k-means together with
// TI), and TI gets its own bins with a dedicated "no inversion" bin. Series
// description never participates.

#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <variant>
#include <vector>

#include "mrclip/error.hpp"
#include "mrclip/kmeans.hpp"
#include "mrclip/manifest.hpp"
#include "mrclip/metadata.hpp"
#include "mrclip/prompt.hpp"
#include "mrclip/util.hpp"

namespace mrclip {

struct GridSpec {
  double te_min_ms = 0.0;
  double te_max_ms = 200.0;
  int n_te = 20;
  double tr_min_ms = 0.0;
  double tr_max_ms = 10000.0;
  int n_tr = 20;
  std::vector<double> ti_bin_edges_ms{400.0, 1000.0, 3000.0};

  double te_width() const { return (te_max_ms - te_min_ms) / n_te; }
  double tr_width() const { return (tr_max_ms - tr_min_ms) / n_tr; }

  // Bin 0 is "no inversion"; E edges split present TI values into bins 1..E+1.
  int ti_bin_count() const { return 2 + static_cast<int>(ti_bin_edges_ms.size()); }

  void validate() const {
    auto check = [](bool ok, const char* what) {
      if (!ok) throw Error(ErrorKind::InvalidConfig, what);
    };
    check(n_te >= 1 && n_tr >= 1, "grid needs at least one bin per axis");
    check(std::isfinite(te_min_ms) && std::isfinite(te_max_ms) && te_min_ms < te_max_ms,
          "TE range must satisfy min < max");
    check(std::isfinite(tr_min_ms) && std::isfinite(tr_max_ms) && tr_min_ms < tr_max_ms,
          "TR range must satisfy min < max");
    check(std::isfinite(te_width()) && te_width() > 0.0 && std::isfinite(tr_width()) &&
              tr_width() > 0.0,
          "bin widths must be finite and positive");
    for (std::size_t i = 0; i < ti_bin_edges_ms.size(); ++i) {
      check(std::isfinite(ti_bin_edges_ms[i]), "TI edges must be finite");
      if (i > 0) check(ti_bin_edges_ms[i - 1] < ti_bin_edges_ms[i], "TI edges must increase");
    }
  }

  static GridSpec with_bins(int te_bins, int tr_bins) {
    GridSpec spec;
    spec.n_te = te_bins;
    spec.n_tr = tr_bins;
    return spec;
  }

  bool operator==(const GridSpec&) const = default;
};

// Parses "TExTR", e.g. "20x20" or "40x20".
inline GridSpec parse_grid(std::string_view text) {
  const auto x = text.find_first_of("xX");
  auto parse_int = [&](std::string_view part) {
    int value = 0;
    auto res = std::from_chars(part.data(), part.data() + part.size(), value);
    if (res.ec != std::errc{} || res.ptr != part.data() + part.size() || value < 1) {
      throw Error(ErrorKind::InvalidConfig, "grid must look like 20x20: '" + std::string(text) + "'");
    }
    return value;
  };
  if (x == std::string_view::npos) {
    throw Error(ErrorKind::InvalidConfig, "grid must look like 20x20: '" + std::string(text) + "'");
  }
  return GridSpec::with_bins(parse_int(text.substr(0, x)), parse_int(text.substr(x + 1)));
}

struct GridBins {
  int te = 0;
  int tr = 0;
  auto operator<=>(const GridBins&) const = default;
};

namespace detail {

inline int clamp_bin(double value, double lo, double width, int count) {
  const double raw = std::floor((value - lo) / width);
  if (raw < 0.0) return 0;
  if (raw > count - 1) return count - 1;
  return static_cast<int>(raw);
}

}  // namespace detail

// Out-of-range values land in the boundary bins.
inline GridBins quantize_te_tr(double te_ms, double tr_ms, const GridSpec& spec) {
  if (!std::isfinite(te_ms) || !std::isfinite(tr_ms)) throw Error(ErrorKind::NonFiniteInput);
  return {detail::clamp_bin(te_ms, spec.te_min_ms, spec.te_width(), spec.n_te),
          detail::clamp_bin(tr_ms, spec.tr_min_ms, spec.tr_width(), spec.n_tr)};
}

inline int bin_ti(std::optional<double> ti_ms, const GridSpec& spec) {
  if (!ti_ms) return 0;
  if (!std::isfinite(*ti_ms)) throw Error(ErrorKind::NonFiniteInput);
  const auto below = std::count_if(spec.ti_bin_edges_ms.begin(), spec.ti_bin_edges_ms.end(),
                                   [&](double edge) { return edge < *ti_ms; });
  return static_cast<int>(below) + 1;
}

// Maps a fine bin to the coarse bin containing its center. When the coarse
// count divides the fine count this is integer division.
inline GridBins coarsen_assignment(const GridSpec& fine, const GridSpec& coarse, GridBins bins) {
  if (fine.te_min_ms != coarse.te_min_ms || fine.te_max_ms != coarse.te_max_ms ||
      fine.tr_min_ms != coarse.tr_min_ms || fine.tr_max_ms != coarse.tr_max_ms) {
    throw Error(ErrorKind::IncompatibleRanges);
  }
  auto axis = [](int bin, int n_fine, int n_coarse, double lo, double fine_width,
                 double coarse_width) {
    if (n_fine % n_coarse == 0) return bin / (n_fine / n_coarse);
    const double center = lo + (bin + 0.5) * fine_width;
    return detail::clamp_bin(center, lo, coarse_width, n_coarse);
  };
  return {axis(bins.te, fine.n_te, coarse.n_te, fine.te_min_ms, fine.te_width(), coarse.te_width()),
          axis(bins.tr, fine.n_tr, coarse.n_tr, fine.tr_min_ms, fine.tr_width(), coarse.tr_width())};
}

enum class LabelField {
  Manufacturer,
  ScannerModel,
  Plane,
  FieldStrength,
  SequenceType,
  SequenceVariant,
  FlipAngle,
  TeBin,
  TrBin,
  TiBin,
};

inline constexpr LabelField kAllLabelFields[] = {
    LabelField::Manufacturer,  LabelField::ScannerModel, LabelField::Plane,
    LabelField::FieldStrength, LabelField::SequenceType, LabelField::SequenceVariant,
    LabelField::FlipAngle,     LabelField::TeBin,        LabelField::TrBin,
    LabelField::TiBin,
};

inline std::string_view to_string(LabelField field) {
  switch (field) {
    case LabelField::Manufacturer: return "manufacturer";
    case LabelField::ScannerModel: return "scanner_model";
    case LabelField::Plane: return "plane";
    case LabelField::FieldStrength: return "field_strength";
    case LabelField::SequenceType: return "sequence_type";
    case LabelField::SequenceVariant: return "sequence_variant";
    case LabelField::FlipAngle: return "flip_angle";
    case LabelField::TeBin: return "te_bin";
    case LabelField::TrBin: return "tr_bin";
    case LabelField::TiBin: return "ti_bin";
  }
  return "";
}

inline LabelField parse_label_field(std::string_view name) {
  for (auto field : kAllLabelFields) {
    if (to_string(field) == name) return field;
  }
  throw Error(ErrorKind::InvalidConfig, "unknown label field '" + std::string(name) + "'");
}

inline bool is_numeric_bin(LabelField field) {
  return field == LabelField::TeBin || field == LabelField::TrBin || field == LabelField::TiBin;
}

struct KMeansGrouping {
  int n_clusters = 20;
  std::uint64_t seed = 0;
  bool operator==(const KMeansGrouping&) const = default;
};

struct LabelConfig {
  std::vector<LabelField> fields{std::begin(kAllLabelFields), std::end(kAllLabelFields)};
  std::variant<GridSpec, KMeansGrouping> grouping = GridSpec{};
  // Set on transferred spaces: TE/TR bins are computed on this grid and then
  // coarsened onto the grouping grid.
  std::optional<GridSpec> coarsened_from;

  bool is_grid() const { return std::holds_alternative<GridSpec>(grouping); }
  const GridSpec& grid() const { return std::get<GridSpec>(grouping); }

  // Fields used when labels come from numerical tags only.
  static std::vector<LabelField> numerical_fields() {
    return {LabelField::FlipAngle, LabelField::TeBin, LabelField::TrBin, LabelField::TiBin};
  }

  void validate() const {
    if (fields.empty()) throw Error(ErrorKind::InvalidConfig, "fields_in_label is empty");
    if (is_grid()) grid().validate();
    if (coarsened_from) coarsened_from->validate();
    if (!is_grid() && std::get<KMeansGrouping>(grouping).n_clusters < 1) {
      throw Error(ErrorKind::InvalidConfig, "n_clusters must be >= 1");
    }
  }
};

// One element of a label key: a categorical string or an integer code (bin
// index, cluster id, or a decimal in tenths).
using KeyPart = std::variant<std::int64_t, std::string>;
using LabelKey = std::vector<KeyPart>;

struct ContrastLabel {
  int label_id = 0;
  LabelKey key;
  std::string canonical_text;
  MetadataRecord representative;
};

inline std::int64_t tenths(double value) { return std::llround(value * 10.0); }

class LabelSpace {
 public:
  LabelConfig config;
  PromptConfig canonical_prompt;
  std::optional<KMeansModel> kmeans;
  std::vector<ContrastLabel> labels;

  // Names of the key elements, in key order.
  std::vector<std::string> part_names() const {
    std::vector<std::string> names;
    bool cluster_done = false;
    for (auto field : sorted_fields()) {
      if (is_numeric_bin(field) && !config.is_grid()) {
        if (!cluster_done) names.emplace_back("cluster");
        cluster_done = true;
        continue;
      }
      names.emplace_back(to_string(field));
    }
    return names;
  }

  LabelKey key_for(const MetadataRecord& r) const {
    LabelKey key;
    bool cluster_done = false;
    for (auto field : sorted_fields()) {
      switch (field) {
        case LabelField::Manufacturer: key.emplace_back(r.manufacturer); break;
        case LabelField::ScannerModel: key.emplace_back(r.scanner_model); break;
        case LabelField::Plane:
          key.emplace_back(r.voxel_spacing_mm ? std::string(to_string(infer_plane(*r.voxel_spacing_mm)))
                                              : std::string("UNKNOWN"));
          break;
        case LabelField::FieldStrength: key.emplace_back(tenths(r.field_strength_tesla)); break;
        case LabelField::SequenceType: key.emplace_back(r.sequence_type); break;
        case LabelField::SequenceVariant: key.emplace_back(r.sequence_variant); break;
        case LabelField::FlipAngle: key.emplace_back(tenths(r.flip_angle_deg)); break;
        case LabelField::TeBin:
        case LabelField::TrBin:
        case LabelField::TiBin:
          if (config.is_grid()) {
            key.emplace_back(static_cast<std::int64_t>(grid_bin(field, r)));
          } else if (!cluster_done) {
            if (!kmeans) throw Error(ErrorKind::InvalidConfig, "k-means label space without a model");
            key.emplace_back(static_cast<std::int64_t>(assign_cluster(r, *kmeans)));
            cluster_done = true;
          }
          break;
      }
    }
    return key;
  }

  std::optional<int> find(const MetadataRecord& r) const {
    auto it = index_.find(key_for(r));
    if (it == index_.end()) return std::nullopt;
    return it->second;
  }

  int assign(const MetadataRecord& r) const {
    if (auto id = find(r)) return *id;
    throw Error(ErrorKind::LabelDecodeFailure, "record '" + r.source_id + "' has no label");
  }

  int id_for_key(const LabelKey& key) const {
    auto it = index_.find(key);
    if (it == index_.end()) throw Error(ErrorKind::LabelDecodeFailure, "unknown key");
    return it->second;
  }

  const ContrastLabel& label(int id) const {
    if (id < 0 || static_cast<std::size_t>(id) >= labels.size()) {
      throw Error(ErrorKind::LabelDecodeFailure, "label id " + std::to_string(id));
    }
    return labels[static_cast<std::size_t>(id)];
  }

  std::size_t size() const { return labels.size(); }

  // Grid used for TE/TR bin distances; absent for k-means spaces.
  std::optional<GridSpec> te_tr_grid() const {
    if (!config.is_grid()) return std::nullopt;
    return config.grid();
  }

  void rebuild_index() {
    index_.clear();
    for (const auto& label : labels) index_.emplace(label.key, label.label_id);
  }

  json to_json() const;
  static LabelSpace from_json(const json& doc);

  std::string hash() const { return to_hex(fnv1a64(to_json().dump())); }

 private:
  std::vector<LabelField> sorted_fields() const {
    std::vector<LabelField> fields = config.fields;
    std::sort(fields.begin(), fields.end());
    fields.erase(std::unique(fields.begin(), fields.end()), fields.end());
    return fields;
  }

  int grid_bin(LabelField field, const MetadataRecord& r) const {
    const GridSpec& grid = config.grid();
    if (field == LabelField::TiBin) return bin_ti(r.ti_ms, grid);
    GridBins bins;
    if (config.coarsened_from) {
      bins = coarsen_assignment(*config.coarsened_from, grid,
                                quantize_te_tr(r.te_ms, r.tr_ms, *config.coarsened_from));
    } else {
      bins = quantize_te_tr(r.te_ms, r.tr_ms, grid);
    }
    return field == LabelField::TeBin ? bins.te : bins.tr;
  }

  std::map<LabelKey, int> index_;
};

struct LabelAssignment {
  LabelSpace space;
  std::vector<int> assignment;  // record index -> label_id
};

namespace detail {

inline json grid_to_json(const GridSpec& g) {
  return {{"te_min_ms", g.te_min_ms}, {"te_max_ms", g.te_max_ms}, {"n_te", g.n_te},
          {"tr_min_ms", g.tr_min_ms}, {"tr_max_ms", g.tr_max_ms}, {"n_tr", g.n_tr},
          {"ti_bin_edges_ms", g.ti_bin_edges_ms}};
}

inline GridSpec grid_from_json(const json& j) {
  GridSpec g;
  g.te_min_ms = j.at("te_min_ms").get<double>();
  g.te_max_ms = j.at("te_max_ms").get<double>();
  g.n_te = j.at("n_te").get<int>();
  g.tr_min_ms = j.at("tr_min_ms").get<double>();
  g.tr_max_ms = j.at("tr_max_ms").get<double>();
  g.n_tr = j.at("n_tr").get<int>();
  g.ti_bin_edges_ms = j.at("ti_bin_edges_ms").get<std::vector<double>>();
  return g;
}

inline json prompt_config_to_json(const PromptConfig& p) {
  return {{"include_series_description", p.include_series_description},
          {"numerical_only", p.numerical_only},
          {"dropout_prob", p.dropout_prob},
          {"seed", p.seed}};
}

inline PromptConfig prompt_config_from_json(const json& j) {
  PromptConfig p;
  p.include_series_description = j.at("include_series_description").get<bool>();
  p.numerical_only = j.at("numerical_only").get<bool>();
  p.dropout_prob = j.at("dropout_prob").get<double>();
  p.seed = j.at("seed").get<std::uint64_t>();
  return p;
}

inline json key_to_json(const LabelKey& key) {
  json out = json::array();
  for (const auto& part : key) {
    std::visit([&](const auto& v) { out.push_back(v); }, part);
  }
  return out;
}

inline LabelKey key_from_json(const json& j) {
  LabelKey key;
  for (const auto& part : j) {
    if (part.is_number_integer()) {
      key.emplace_back(part.get<std::int64_t>());
    } else if (part.is_string()) {
      key.emplace_back(part.get<std::string>());
    } else {
      throw Error(ErrorKind::MalformedJson, "label key part must be integer or string");
    }
  }
  return key;
}

inline json point_to_json(const KMeansPoint& p) { return json(std::vector<double>(p.begin(), p.end())); }

inline KMeansPoint point_from_json(const json& j) {
  const auto v = j.get<std::vector<double>>();
  if (v.size() != 4) throw Error(ErrorKind::MalformedJson, "k-means point needs 4 values");
  return {v[0], v[1], v[2], v[3]};
}

}  // namespace detail

inline constexpr int kLabelSpaceVersion = 1;

inline json LabelSpace::to_json() const {
  json fields = json::array();
  for (auto f : config.fields) fields.push_back(std::string(mrclip::to_string(f)));
  json grouping;
  if (config.is_grid()) {
    grouping = {{"mode", "grid"}, {"grid", detail::grid_to_json(config.grid())}};
  } else {
    const auto& km = std::get<KMeansGrouping>(config.grouping);
    grouping = {{"mode", "kmeans"}, {"n_clusters", km.n_clusters}, {"seed", km.seed}};
  }
  json doc = {
      {"format", "mrclip-label-space"},
      {"version", kLabelSpaceVersion},
      {"prompt_template_version", kPromptTemplateVersion},
      {"config",
       {{"fields_in_label", fields},
        {"grouping", grouping},
        {"coarsened_from",
         config.coarsened_from ? detail::grid_to_json(*config.coarsened_from) : json(nullptr)}}},
      {"canonical_prompt", detail::prompt_config_to_json(canonical_prompt)},
  };
  if (kmeans) {
    json centroids = json::array();
    for (const auto& c : kmeans->centroids) centroids.push_back(detail::point_to_json(c));
    doc["kmeans_model"] = {{"centroids", centroids},
                           {"feature_min", detail::point_to_json(kmeans->feature_min)},
                           {"feature_max", detail::point_to_json(kmeans->feature_max)},
                           {"inertia_history", kmeans->inertia_history},
                           {"iterations", kmeans->iterations},
                           {"seed", kmeans->seed}};
  } else {
    doc["kmeans_model"] = nullptr;
  }
  json items = json::array();
  for (const auto& label : labels) {
    items.push_back({{"label_id", label.label_id},
                     {"key", detail::key_to_json(label.key)},
                     {"canonical_text", label.canonical_text},
                     {"representative", record_to_json(label.representative)}});
  }
  doc["key_fields"] = part_names();
  doc["labels"] = std::move(items);
  return doc;
}

inline LabelSpace LabelSpace::from_json(const json& doc) {
  try {
    if (doc.at("format") != "mrclip-label-space") {
      throw Error(ErrorKind::MalformedJson, "not a label-space file");
    }
    if (doc.at("prompt_template_version").get<int>() != kPromptTemplateVersion) {
      throw Error(ErrorKind::InvalidConfig, "label space was built with another prompt template");
    }
    LabelSpace space;
    const json& cfg = doc.at("config");
    space.config.fields.clear();
    for (const auto& f : cfg.at("fields_in_label")) {
      space.config.fields.push_back(parse_label_field(f.get<std::string>()));
    }
    const json& grouping = cfg.at("grouping");
    if (grouping.at("mode") == "grid") {
      space.config.grouping = detail::grid_from_json(grouping.at("grid"));
    } else {
      space.config.grouping = KMeansGrouping{grouping.at("n_clusters").get<int>(),
                                             grouping.at("seed").get<std::uint64_t>()};
    }
    if (!cfg.at("coarsened_from").is_null()) {
      space.config.coarsened_from = detail::grid_from_json(cfg.at("coarsened_from"));
    }
    space.canonical_prompt = detail::prompt_config_from_json(doc.at("canonical_prompt"));
    if (const json& km = doc.at("kmeans_model"); !km.is_null()) {
      KMeansModel model;
      for (const auto& c : km.at("centroids")) model.centroids.push_back(detail::point_from_json(c));
      model.feature_min = detail::point_from_json(km.at("feature_min"));
      model.feature_max = detail::point_from_json(km.at("feature_max"));
      model.inertia_history = km.at("inertia_history").get<std::vector<double>>();
      model.iterations = km.at("iterations").get<int>();
      model.seed = km.at("seed").get<std::uint64_t>();
      space.kmeans = std::move(model);
    }
    for (const auto& item : doc.at("labels")) {
      ContrastLabel label;
      label.label_id = item.at("label_id").get<int>();
      if (label.label_id != static_cast<int>(space.labels.size())) {
        throw Error(ErrorKind::MalformedJson, "label ids must be dense and ordered");
      }
      label.key = detail::key_from_json(item.at("key"));
      label.canonical_text = item.at("canonical_text").get<std::string>();
      label.representative = record_from_json(item.at("representative"));
      space.labels.push_back(std::move(label));
    }
    space.config.validate();
    space.rebuild_index();
    return space;
  } catch (const json::exception& e) {
    throw Error(ErrorKind::MalformedJson, e.what());
  }
}

// Builds the label space over `records`. Label ids follow sorted key order.
// Each label's canonical text is the lexicographically smallest canonical
// prompt among its records, which keeps the choice independent of record order.
inline LabelAssignment build_label_space(std::span<const MetadataRecord> records,
                                         const LabelConfig& config,
                                         const PromptConfig& canonical_prompt = {}) {
  if (records.empty()) throw Error(ErrorKind::EmptyDataset);
  config.validate();
  LabelAssignment out;
  LabelSpace& space = out.space;
  space.config = config;
  space.canonical_prompt = canonical_prompt;
  space.canonical_prompt.dropout_prob = 0.0;
  if (!config.is_grid()) {
    const auto& km = std::get<KMeansGrouping>(config.grouping);
    space.kmeans = fit_kmeans(records, km.n_clusters, km.seed);
  }

  struct Candidate {
    std::string text;
    std::string tie;
    std::size_t record;
  };
  std::map<LabelKey, Candidate> best;
  std::vector<LabelKey> keys;
  keys.reserve(records.size());
  for (std::size_t i = 0; i < records.size(); ++i) {
    keys.push_back(space.key_for(records[i]));
    Candidate candidate{render_prompt(records[i], space.canonical_prompt).text, {}, i};
    auto it = best.find(keys.back());
    if (it == best.end()) {
      candidate.tie = record_to_json(records[i]).dump();
      best.emplace(keys.back(), std::move(candidate));
    } else if (candidate.text <= it->second.text) {
      candidate.tie = record_to_json(records[i]).dump();
      if (candidate.text < it->second.text || candidate.tie < it->second.tie) {
        it->second = std::move(candidate);
      }
    }
  }

  int next_id = 0;
  for (auto& [key, candidate] : best) {
    ContrastLabel label;
    label.label_id = next_id++;
    label.key = key;
    label.canonical_text = candidate.text;
    label.representative = records[candidate.record];
    space.labels.push_back(std::move(label));
  }
  space.rebuild_index();
  out.assignment.reserve(records.size());
  for (const auto& key : keys) out.assignment.push_back(space.id_for_key(key));
  return out;
}

// Relabels `records` under a coarser grid by coarsening the fine space's
// TE/TR bins. Categorical fields and TI bins carry over from the fine config.
inline LabelAssignment transfer_label_space(const LabelSpace& fine, const GridSpec& coarse,
                                            std::span<const MetadataRecord> records) {
  if (!fine.config.is_grid()) {
    throw Error(ErrorKind::IncompatibleRanges, "transfer needs a grid-based source space");
  }
  const GridSpec& source = fine.config.grid();
  coarsen_assignment(source, coarse, GridBins{});  // range check
  LabelConfig config = fine.config;
  GridSpec target = coarse;
  target.ti_bin_edges_ms = source.ti_bin_edges_ms;
  config.grouping = target;
  config.coarsened_from = fine.config.coarsened_from ? *fine.config.coarsened_from : source;
  return build_label_space(records, config, fine.canonical_prompt);
}

}  // namespace mrclip
