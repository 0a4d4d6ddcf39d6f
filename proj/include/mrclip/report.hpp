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

#include <cstdio>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "mrclip/dataset.hpp"
#include "mrclip/encoder.hpp"
#include "mrclip/eval.hpp"
#include "mrclip/label_space.hpp"
#include "mrclip/prompt.hpp"

namespace mrclip {

struct RecallSet {
  double r1 = 0.0, r5 = 0.0, r10 = 0.0;
};

struct EvalReport {
  RecallSet image_to_text;
  RecallSet scan_to_text;
  RecallSet text_to_image;
  std::optional<double> probe_accuracy;
  TagErrors tags;
  std::string per_tag_source;  // "probe" or "retrieval"
  std::string config_hash;
  std::string label_space_hash;
  std::size_t n_labels = 0;
  std::size_t n_eval_slices = 0;
  std::size_t n_eval_scans = 0;
  std::size_t n_train_slices = 0;
  bool numerical_only = false;
  std::optional<GridSpec> transfer_grid;

  json to_json() const {
    auto recalls = [](const RecallSet& r) { return json{{"r1", r.r1}, {"r5", r.r5}, {"r10", r.r10}}; };
    auto opt = [](const std::optional<double>& v) { return v ? json(*v) : json(nullptr); };
    return {
        {"recalls",
         {{"image_to_text", recalls(image_to_text)},
          {"scan_to_text", recalls(scan_to_text)},
          {"text_to_image", recalls(text_to_image)}}},
        {"probe_accuracy", opt(probe_accuracy)},
        {"per_tag_error", tags.rates},
        {"per_tag_source", per_tag_source},
        {"te_bin_mae", opt(tags.te_bin_mae)},
        {"tr_bin_mae", opt(tags.tr_bin_mae)},
        {"te_bin_mae_ms", opt(tags.te_bin_mae_ms)},
        {"tr_bin_mae_ms", opt(tags.tr_bin_mae_ms)},
        {"config_hash", config_hash},
        {"label_space_hash", label_space_hash},
        {"counts",
         {{"labels", n_labels},
          {"eval_slices", n_eval_slices},
          {"eval_scans", n_eval_scans},
          {"train_slices", n_train_slices}}},
        {"numerical_only", numerical_only},
        {"transfer_grid", transfer_grid ? detail::grid_to_json(*transfer_grid) : json(nullptr)},
    };
  }
};

namespace detail {

inline std::string percent(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.1f", 100.0 * v);
  return buf;
}

inline std::string fixed(double v, int digits) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.*f", digits, v);
  return buf;
}

}  // namespace detail

// Human-readable rendering, percentages with one decimal.
inline std::string render_table(const EvalReport& report) {
  std::ostringstream os;
  char line[128];
  os << "Task              R@1     R@5     R@10\n";
  auto row = [&](const char* name, const RecallSet& r) {
    std::snprintf(line, sizeof(line), "%-16s %6s  %6s  %6s\n", name, detail::percent(r.r1).c_str(),
                  detail::percent(r.r5).c_str(), detail::percent(r.r10).c_str());
    os << line;
  };
  row("Image->Text", report.image_to_text);
  row("3D Scan->Text", report.scan_to_text);
  row("Text->Image", report.text_to_image);
  os << "\nLinear probe accuracy: "
     << (report.probe_accuracy ? detail::percent(*report.probe_accuracy) : std::string("n/a")) << "\n";
  os << "\nPer-tag error (%, from " << report.per_tag_source << "):\n";
  for (const auto& [field, rate] : report.tags.rates) {
    std::snprintf(line, sizeof(line), "  %-16s %6s\n", field.c_str(), detail::percent(rate).c_str());
    os << line;
  }
  if (report.tags.te_bin_mae) {
    os << "TE bin MAE: " << detail::fixed(*report.tags.te_bin_mae, 2) << " bins ("
       << detail::fixed(*report.tags.te_bin_mae_ms, 1) << " ms)\n";
  }
  if (report.tags.tr_bin_mae) {
    os << "TR bin MAE: " << detail::fixed(*report.tags.tr_bin_mae, 2) << " bins ("
       << detail::fixed(*report.tags.tr_bin_mae_ms, 1) << " ms)\n";
  }
  os << "\nlabels " << report.n_labels << ", eval slices " << report.n_eval_slices << ", eval scans "
     << report.n_eval_scans << ", config " << report.config_hash << "\n";
  return os.str();
}

struct EvalOptions {
  bool numerical_only = false;
  bool run_probe = true;
  double probe_l2 = 1e-4;
  std::string config_hash;
};

// Text embedding per label present in `label_ids`, rendered from each label's
// representative record under the space's canonical prompt (optionally
// restricted to numerical clauses).
inline Gallery build_gallery(const DualEncoder& model, const LabelSpace& space,
                             const std::set<int>& label_ids, bool numerical_only) {
  PromptConfig prompt = space.canonical_prompt;
  prompt.dropout_prob = 0.0;
  prompt.numerical_only = prompt.numerical_only || numerical_only;
  Gallery gallery;
  TokenLists tokens;
  for (int id : label_ids) {
    gallery.label_ids.push_back(id);
    tokens.push_back(render_prompt(space.label(id).representative, prompt, model.dims().vocab).token_ids);
  }
  if (gallery.label_ids.empty()) throw Error(ErrorKind::EmptyGallery);
  gallery.embeddings = model.encode_texts(tokens);
  return gallery;
}

inline std::vector<int> assign_all(const LabelSpace& space, const std::vector<SyntheticSlice>& slices) {
  std::vector<int> labels;
  labels.reserve(slices.size());
  for (const auto& s : slices) labels.push_back(space.assign(s.record));
  return labels;
}

// Retrieval over `eval`, probe trained on `train` and tested on `eval`.
inline EvalReport evaluate(const DualEncoder& model, const LabelSpace& space,
                           const std::vector<SyntheticSlice>& train,
                           const std::vector<SyntheticSlice>& eval, const EvalOptions& options) {
  if (eval.empty()) throw Error(ErrorKind::EmptyImageSet, "no evaluation slices");
  EvalReport report;
  report.config_hash = options.config_hash;
  report.label_space_hash = space.hash();
  report.numerical_only = options.numerical_only;
  report.n_eval_slices = eval.size();
  report.n_train_slices = train.size();

  const auto eval_labels = assign_all(space, eval);
  const std::set<int> present(eval_labels.begin(), eval_labels.end());
  report.n_labels = present.size();
  const Gallery gallery = build_gallery(model, space, present, options.numerical_only);
  const Tensor images = model.encode_images(feature_matrix(eval));

  RecallSet& i2t = report.image_to_text;
  i2t.r1 = recall_at_k(images, eval_labels, gallery, 1);
  i2t.r5 = recall_at_k(images, eval_labels, gallery, 5);
  i2t.r10 = recall_at_k(images, eval_labels, gallery, 10);

  std::vector<std::string> keys;
  keys.reserve(eval.size());
  for (const auto& s : eval) keys.push_back(s.scan_key());
  const ScanRecall scan = scan_to_text_recall(images, eval_labels, keys, gallery);
  report.scan_to_text = {scan.r1, scan.r5, scan.r10};
  report.n_eval_scans = scan.scans;

  RecallSet& t2i = report.text_to_image;
  t2i.r1 = text_to_image_recall(gallery, images, eval_labels, 1);
  t2i.r5 = text_to_image_recall(gallery, images, eval_labels, 5);
  t2i.r10 = text_to_image_recall(gallery, images, eval_labels, 10);

  std::vector<int> predictions;
  const auto train_labels = assign_all(space, train);
  const bool probe_possible =
      options.run_probe && std::set<int>(train_labels.begin(), train_labels.end()).size() >= 2;
  if (probe_possible) {
    const Tensor train_images = model.encode_images(feature_matrix(train));
    const auto probe = linear_probe(train_images, train_labels, images, eval_labels, options.probe_l2);
    report.probe_accuracy = probe.accuracy;
    predictions = probe.predictions;
    report.per_tag_source = "probe";
  } else {
    const Tensor sims = similarity_matrix(images, gallery.embeddings);
    for (std::size_t i = 0; i < images.rows(); ++i) {
      const auto order = detail::rank_row(sims.row(i), gallery.label_ids);
      predictions.push_back(gallery.label_ids[order.front()]);
    }
    report.per_tag_source = "retrieval";
  }
  report.tags = per_tag_error(predictions, eval_labels, space);
  return report;
}

// Evaluates a model trained under the grid space `fine` against `coarse` by
// coarsening every record's bins, then rebuilding the gallery.
inline EvalReport transfer_eval(const DualEncoder& model, const LabelSpace& fine,
                                const GridSpec& coarse, const std::vector<SyntheticSlice>& train,
                                const std::vector<SyntheticSlice>& eval, const EvalOptions& options) {
  std::vector<MetadataRecord> records = records_of(train);
  const auto eval_records = records_of(eval);
  records.insert(records.end(), eval_records.begin(), eval_records.end());
  const auto transferred = transfer_label_space(fine, coarse, records);
  EvalReport report = evaluate(model, transferred.space, train, eval, options);
  report.transfer_grid = coarse;
  return report;
}

}  // namespace mrclip
