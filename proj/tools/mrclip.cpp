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

// mrclip: ingest -> labels -> train -> eval.
//
// Exit codes: 0 success, 1 usage error, 2 data error, 3 numerical failure.

#include <chrono>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "mrclip.hpp"

namespace fs = std::filesystem;
using namespace mrclip;

namespace {

constexpr int kExitUsage = 1;
constexpr int kExitData = 2;
constexpr int kExitNumerical = 3;

std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorKind::Io, "cannot open " + path);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

json read_json_file(const std::string& path) {
  json doc = json::parse(read_file(path), nullptr, false);
  if (doc.is_discarded()) throw Error(ErrorKind::MalformedJson, path);
  return doc;
}

LabelSpace load_label_space(const std::string& path) { return LabelSpace::from_json(read_json_file(path)); }

void ensure_dir(const std::string& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw Error(ErrorKind::Io, "cannot create " + dir + ": " + ec.message());
}

// ---------------------------------------------------------------- ingest

struct IngestOptions {
  std::vector<std::string> paths;
  std::string out;
  bool skip_bad = false;
};

std::vector<fs::path> expand_paths(const std::vector<std::string>& inputs) {
  std::vector<fs::path> files;
  for (const auto& input : inputs) {
    const fs::path p(input);
    if (fs::is_directory(p)) {
      std::vector<fs::path> found;
      for (const auto& entry : fs::recursive_directory_iterator(p)) {
        if (entry.is_regular_file()) found.push_back(entry.path());
      }
      std::sort(found.begin(), found.end());
      files.insert(files.end(), found.begin(), found.end());
    } else if (fs::exists(p)) {
      files.push_back(p);
    } else {
      throw Error(ErrorKind::Io, "no such file or directory: " + input);
    }
  }
  return files;
}

int run_ingest(const IngestOptions& opt) {
  std::vector<SyntheticSlice> slices;
  std::map<std::string, std::size_t> rejected;
  for (const auto& file : expand_paths(opt.paths)) {
    const std::string name = file.generic_string();
    try {
      if (file.extension() == ".jsonl") {
        for (const auto& line : read_lines(name)) slices.push_back({{}, parse_manifest_line(line), 0, 0});
      } else {
        const std::string bytes = read_file(name);
        const auto* data = reinterpret_cast<const std::uint8_t*>(bytes.data());
        slices.push_back({{}, dicom::parse_dicom_tags({data, bytes.size()}, name), 0, 0});
      }
    } catch (const Error& e) {
      if (!opt.skip_bad || e.kind() == ErrorKind::Io) throw Error(e.kind(), name + ": " + e.detail());
      ++rejected[std::string(to_string(e.kind()))];
    }
  }
  if (slices.empty()) throw Error(ErrorKind::EmptyDataset, "no records ingested");
  save_dataset(opt.out, slices);
  std::cout << dataset_summary(records_of(slices));
  std::size_t total_rejected = 0;
  for (const auto& [kind, count] : rejected) total_rejected += count;
  std::cout << "rejected " << total_rejected;
  for (const auto& [kind, count] : rejected) std::cout << " " << kind << "=" << count;
  std::cout << "\n";
  return 0;
}

// ---------------------------------------------------------------- synth

struct SynthOptions {
  std::string out;
  int scans = 2000;
  int slices = 5;
  double noise = SynthConfig{}.noise_sigma;
  double jitter = SynthConfig{}.anatomy_jitter;
  std::uint64_t seed = 0;
  std::string cells = "5x5";
  int positions = ProtocolGridOptions{}.positions_per_cell;
  double spread = ProtocolGridOptions{}.spread;
};

int run_synth(const SynthOptions& opt) {
  ProtocolGridOptions grid;
  grid.cells = parse_grid(opt.cells);
  grid.positions_per_cell = opt.positions;
  grid.spread = opt.spread;
  SynthConfig config;
  config.protocols = grid_protocols(grid);
  config.scans = opt.scans;
  config.slices_per_scan = opt.slices;
  config.noise_sigma = opt.noise;
  config.anatomy_jitter = opt.jitter;
  config.seed = opt.seed;
  const auto slices = generate_dataset(config);
  save_dataset(opt.out, slices);
  std::cout << "protocols " << config.protocols.size() << ", slices " << slices.size() << "\n";
  return 0;
}

// ---------------------------------------------------------------- labels

struct LabelOptions {
  std::string dataset;
  std::string out;
  std::string grid = "20x20";
  std::optional<int> kmeans;
  std::uint64_t seed = 0;
  bool numeric_labels = false;
  std::vector<std::string> fields;
};

int run_build_labels(const LabelOptions& opt) {
  const auto slices = load_dataset(opt.dataset);
  LabelConfig config;
  if (opt.numeric_labels) config.fields = LabelConfig::numerical_fields();
  if (!opt.fields.empty()) {
    config.fields.clear();
    for (const auto& f : opt.fields) config.fields.push_back(parse_label_field(f));
  }
  if (opt.kmeans) {
    config.grouping = KMeansGrouping{*opt.kmeans, opt.seed};
  } else {
    config.grouping = parse_grid(opt.grid);
  }
  const auto records = records_of(slices);
  const auto built = build_label_space(records, config);
  write_text(opt.out, built.space.to_json().dump(2) + "\n");
  std::cout << "labels " << built.space.size() << " from " << records.size() << " records\n";
  return 0;
}

// ---------------------------------------------------------------- prompts

struct PromptOptions {
  std::string dataset;
  std::string labels;
  std::string out;
  double dropout = 0.0;
  bool numerical_only = false;
  bool series_description = false;
  std::uint64_t seed = 0;
};

int run_prompts(const PromptOptions& opt) {
  const auto slices = load_dataset(opt.dataset);
  const auto space = load_label_space(opt.labels);
  std::ostringstream os;
  Rng rng(opt.seed);
  for (const auto& s : slices) {
    PromptConfig config{opt.series_description, opt.numerical_only, opt.dropout, rng.next()};
    const auto prompt = render_prompt(s.record, config);
    os << json{{"source_id", s.record.source_id}, {"text", prompt.text}, {"label_id", space.assign(s.record)}}.dump()
       << "\n";
  }
  write_text(opt.out, os.str());
  return 0;
}

// ---------------------------------------------------------------- train

struct TrainOptions {
  std::string dataset;
  std::string labels;
  std::string out;
  std::string config;
  std::string resume;
  int stop_after = -1;
};

int run_train(const TrainOptions& opt, RunConfig cfg, const CLI::App& cmd) {
  if (!opt.config.empty()) {
    RunConfig base = RunConfig::from_json(read_json_file(opt.config));
    // Flags given explicitly on the command line win over the file.
    auto keep = [&](const char* flag, auto& field, const auto& value) {
      if (cmd.count(flag) == 0) field = value;
    };
    keep("--seed", cfg.seed, base.seed);
    keep("--loss", cfg.loss, base.loss);
    keep("--shards", cfg.shards, base.shards);
    keep("--epochs", cfg.epochs, base.epochs);
    keep("--batch-size", cfg.batch_size, base.batch_size);
    keep("--lr", cfg.adam.lr, base.adam.lr);
    keep("--warmup", cfg.adam.warmup_steps, base.adam.warmup_steps);
    keep("--weight-decay", cfg.adam.weight_decay, base.adam.weight_decay);
    keep("--dropout", cfg.prompt.dropout_prob, base.prompt.dropout_prob);
    keep("--numerical-only", cfg.prompt.numerical_only, base.prompt.numerical_only);
    keep("--no-series-description", cfg.prompt.include_series_description,
         base.prompt.include_series_description);
    keep("--holdout", cfg.holdout_fraction, base.holdout_fraction);
    cfg.dims = base.dims;
    cfg.adam.beta1 = base.adam.beta1;
    cfg.adam.beta2 = base.adam.beta2;
    cfg.adam.eps = base.adam.eps;
    cfg.cosine_schedule = base.cosine_schedule;
    cfg.init_temperature = base.init_temperature;
    cfg.split_seed = base.split_seed;
    cfg.probe_l2 = base.probe_l2;
  }
  cfg.dataset = opt.dataset;
  cfg.labels = opt.labels;

  TrainingState state;
  if (!opt.resume.empty()) {
    Checkpoint ckpt = load_checkpoint(opt.resume);
    cfg = ckpt.config;
    state = std::move(ckpt.state);
  }
  const auto slices = load_dataset(cfg.dataset);
  const auto space = load_label_space(cfg.labels);
  const auto split = split_dataset(slices, cfg.holdout_fraction, cfg.split_seed);
  if (split.train.empty()) throw Error(ErrorKind::EmptyDataset, "no training slices after the split");
  const auto labels = assign_all(space, split.train);
  if (opt.resume.empty()) {
    state = init_training(cfg, space, split.train.size());
  } else if (state.label_space_hash != space.hash()) {
    throw Error(ErrorKind::InvalidConfig, "checkpoint was trained on a different label space");
  }

  ensure_dir(opt.out);
  const std::string log_path = (fs::path(opt.out) / "train_log.jsonl").string();
  std::ofstream log(log_path, opt.resume.empty() ? std::ios::trunc : std::ios::app);
  if (!log) throw Error(ErrorKind::Io, "cannot write " + log_path);

  const auto start = std::chrono::steady_clock::now();
  int ran = 0;
  while (state.epochs_completed < cfg.epochs && (opt.stop_after < 0 || ran < opt.stop_after)) {
    double loss_sum = 0.0;
    std::size_t steps = 0;
    const int epoch = state.epochs_completed;
    train_epoch(state, cfg, split.train, labels, [&](const StepLog& entry) {
      json line = entry.to_json();
      line["epoch"] = epoch;
      log << line.dump() << "\n";
      loss_sum += entry.loss;
      ++steps;
    });
    std::cerr << "epoch " << epoch << " mean loss " << loss_sum / static_cast<double>(steps)
              << " tau " << state.model.temperature() << "\n";
    ++ran;
  }
  const double seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();

  save_checkpoint((fs::path(opt.out) / "checkpoint.bin").string(), cfg, state);
  json config_doc = cfg.to_json();
  config_doc["config_hash"] = cfg.hash();
  write_text((fs::path(opt.out) / "run_config.json").string(), config_doc.dump(2) + "\n");
  std::cerr << "trained " << ran << " epochs in " << seconds << " s\n";
  std::cout << "checkpoint " << (fs::path(opt.out) / "checkpoint.bin").string() << " epochs "
            << state.epochs_completed << "/" << cfg.epochs << " config " << cfg.hash() << "\n";
  return 0;
}

// ---------------------------------------------------------------- eval

struct EvalCliOptions {
  std::string checkpoint;
  std::string dataset;
  std::string labels;
  std::string transfer;
  std::string report = "table";
  std::string split = "heldout";
  std::string out;
  bool numerical_only = false;
  bool no_probe = false;
};

// A transfer target is a label-space file, a grid JSON object, or "TExTR".
GridSpec load_transfer_grid(const std::string& value) {
  if (!fs::exists(value)) return parse_grid(value);
  const json doc = read_json_file(value);
  try {
    if (doc.contains("format")) return LabelSpace::from_json(doc).config.grid();
    if (doc.contains("grid")) return detail::grid_from_json(doc.at("grid"));
    return detail::grid_from_json(doc);
  } catch (const json::exception& e) {
    throw Error(ErrorKind::MalformedJson, value + ": " + e.what());
  } catch (const std::bad_variant_access&) {
    throw Error(ErrorKind::IncompatibleRanges, value + " is not a grid label space");
  }
}

int run_eval(const EvalCliOptions& opt) {
  const Checkpoint ckpt = load_checkpoint(opt.checkpoint);
  const auto space = load_label_space(opt.labels.empty() ? ckpt.config.labels : opt.labels);
  if (space.hash() != ckpt.state.label_space_hash) {
    throw Error(ErrorKind::InvalidConfig, "label space differs from the one used in training");
  }
  const auto slices = load_dataset(opt.dataset.empty() ? ckpt.config.dataset : opt.dataset);
  const auto split = split_dataset(slices, ckpt.config.holdout_fraction, ckpt.config.split_seed);
  const std::vector<SyntheticSlice>* eval_set = &split.test;
  if (opt.split == "train") eval_set = &split.train;
  if (opt.split == "all") eval_set = &slices;

  EvalOptions options;
  options.numerical_only = opt.numerical_only;
  options.run_probe = !opt.no_probe;
  options.probe_l2 = ckpt.config.probe_l2;
  options.config_hash = ckpt.config.hash();
  const EvalReport report =
      opt.transfer.empty()
          ? evaluate(ckpt.state.model, space, split.train, *eval_set, options)
          : transfer_eval(ckpt.state.model, space, load_transfer_grid(opt.transfer), split.train,
                          *eval_set, options);
  const std::string text = opt.report == "json" ? report.to_json().dump(2) + "\n" : render_table(report);
  if (!opt.out.empty()) write_text(opt.out, text);
  std::cout << text;
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Contrast-aware MR image/metadata retrieval at desk scale"};
  app.require_subcommand(1);

  IngestOptions ingest;
  auto* ingest_cmd = app.add_subcommand("ingest", "Parse DICOM files or manifests into a dataset file");
  ingest_cmd->add_option("paths", ingest.paths, "Files or directories")->required();
  ingest_cmd->add_option("--out", ingest.out, "Output dataset (JSON lines)")->required();
  ingest_cmd->add_flag("--skip-bad", ingest.skip_bad, "Skip unparseable files and count them");

  SynthOptions synth;
  auto* synth_cmd = app.add_subcommand("synth", "Generate a synthetic dataset");
  synth_cmd->add_option("--out", synth.out, "Output dataset (JSON lines)")->required();
  synth_cmd->add_option("--scans", synth.scans, "Number of scans")->capture_default_str();
  synth_cmd->add_option("--slices", synth.slices, "Slices per scan")->capture_default_str();
  synth_cmd->add_option("--noise", synth.noise, "Gaussian noise sigma")->capture_default_str();
  synth_cmd->add_option("--jitter", synth.jitter, "Anatomy jitter fraction")->capture_default_str();
  synth_cmd->add_option("--seed", synth.seed, "Seed")->capture_default_str();
  synth_cmd->add_option("--cells", synth.cells, "Protocol grid TExTR")->capture_default_str();
  synth_cmd->add_option("--positions", synth.positions, "Sample points per cell axis")->capture_default_str();
  synth_cmd->add_option("--spread", synth.spread, "Cell fraction spanned by the points")->capture_default_str();

  LabelOptions labels;
  auto* labels_cmd = app.add_subcommand("build-labels", "Build a label space from a dataset");
  labels_cmd->add_option("--dataset", labels.dataset, "Dataset file")->required();
  labels_cmd->add_option("--out", labels.out, "Output label-space file")->required();
  auto* grid_opt = labels_cmd->add_option("--grid", labels.grid, "TE x TR bins")->capture_default_str();
  labels_cmd->add_option("--kmeans", labels.kmeans, "Cluster (TE, TR, TI) into N groups")->excludes(grid_opt);
  labels_cmd->add_option("--seed", labels.seed, "k-means seed")->capture_default_str();
  labels_cmd->add_flag("--numeric-labels", labels.numeric_labels, "Label by numerical tags only");
  labels_cmd->add_option("--fields", labels.fields, "Explicit label fields");

  PromptOptions prompts;
  auto* prompts_cmd = app.add_subcommand("prompts", "Dump rendered prompts as JSON lines");
  prompts_cmd->add_option("--dataset", prompts.dataset, "Dataset file")->required();
  prompts_cmd->add_option("--labels", prompts.labels, "Label-space file")->required();
  prompts_cmd->add_option("--out", prompts.out, "Output file")->required();
  prompts_cmd->add_option("--dropout", prompts.dropout, "Clause dropout probability")->capture_default_str();
  prompts_cmd->add_flag("--numerical-only", prompts.numerical_only, "Numerical clauses only");
  prompts_cmd->add_flag("--series-description", prompts.series_description, "Append series description");
  prompts_cmd->add_option("--seed", prompts.seed, "Dropout seed")->capture_default_str();

  TrainOptions train;
  RunConfig run;
  std::string loss_name = "supcon";
  bool no_description = false;
  auto* train_cmd = app.add_subcommand("train", "Train the dual encoder");
  train_cmd->add_option("--dataset", train.dataset, "Dataset file")->required();
  train_cmd->add_option("--labels", train.labels, "Label-space file")->required();
  train_cmd->add_option("--out", train.out, "Output directory")->required();
  train_cmd->add_option("--config", train.config, "Run config JSON to start from");
  train_cmd->add_option("--resume", train.resume, "Continue from a checkpoint");
  train_cmd->add_option("--stop-after", train.stop_after, "Stop after this many epochs in this run");
  train_cmd->add_option("--seed", run.seed, "Seed")->capture_default_str();
  train_cmd->add_option("--loss", loss_name, "supcon or infonce")
      ->check(CLI::IsMember({"supcon", "infonce"}))
      ->capture_default_str();
  train_cmd->add_option("--shards", run.shards, "Loss shards")->check(CLI::PositiveNumber)->capture_default_str();
  train_cmd->add_option("--epochs", run.epochs, "Epochs")->check(CLI::NonNegativeNumber)->capture_default_str();
  train_cmd->add_option("--batch-size", run.batch_size, "Batch size")->check(CLI::PositiveNumber)->capture_default_str();
  train_cmd->add_option("--lr", run.adam.lr, "Peak learning rate")->capture_default_str();
  train_cmd->add_option("--warmup", run.adam.warmup_steps, "Warmup steps")->capture_default_str();
  train_cmd->add_option("--weight-decay", run.adam.weight_decay, "Decoupled weight decay")->capture_default_str();
  train_cmd->add_option("--dropout", run.prompt.dropout_prob, "Text clause dropout")
      ->check(CLI::Range(0.0, 1.0))
      ->capture_default_str();
  train_cmd->add_flag("--numerical-only", run.prompt.numerical_only, "Train on numerical clauses only");
  train_cmd->add_flag("--no-series-description", no_description, "Leave series description out of prompts");
  train_cmd->add_option("--holdout", run.holdout_fraction, "Held-out scan fraction")
      ->check(CLI::Range(0.0, 1.0))
      ->capture_default_str();

  EvalCliOptions eval;
  auto* eval_cmd = app.add_subcommand("eval", "Evaluate a checkpoint");
  eval_cmd->add_option("--checkpoint", eval.checkpoint, "Checkpoint file")->required();
  eval_cmd->add_option("--dataset", eval.dataset, "Dataset file (default: from checkpoint)");
  eval_cmd->add_option("--labels", eval.labels, "Label-space file (default: from checkpoint)");
  eval_cmd->add_option("--transfer", eval.transfer, "Coarse grid: label-space file, grid JSON or TExTR");
  eval_cmd->add_option("--report", eval.report, "json or table")
      ->check(CLI::IsMember({"json", "table"}))
      ->capture_default_str();
  eval_cmd->add_option("--split", eval.split, "heldout, train or all")
      ->check(CLI::IsMember({"heldout", "train", "all"}))
      ->capture_default_str();
  eval_cmd->add_option("--out", eval.out, "Also write the report here");
  eval_cmd->add_flag("--numerical-only", eval.numerical_only, "Gallery prompts with numerical clauses only");
  eval_cmd->add_flag("--no-probe", eval.no_probe, "Skip the linear probe");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? 0 : kExitUsage;
  }

  try {
    if (*ingest_cmd) return run_ingest(ingest);
    if (*synth_cmd) return run_synth(synth);
    if (*labels_cmd) return run_build_labels(labels);
    if (*prompts_cmd) return run_prompts(prompts);
    if (*train_cmd) {
      run.loss = parse_loss_kind(loss_name);
      if (no_description) run.prompt.include_series_description = false;
      return run_train(train, run, *train_cmd);
    }
    if (*eval_cmd) return run_eval(eval);
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return is_numerical_failure(e.kind()) ? kExitNumerical : kExitData;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitData;
  }
  return kExitUsage;
}
