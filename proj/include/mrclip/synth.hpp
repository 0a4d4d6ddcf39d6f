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

// Synthetic slices whose "image" is a vector of per-tissue MR signals. The
// contrast is a deterministic function of the acquisition parameters; each
// slice mixes tissue fractions randomly (anatomy) and adds Gaussian noise.

#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numbers>
#include <string>
#include <vector>

#include "mrclip/dataset.hpp"
#include "mrclip/error.hpp"
#include "mrclip/label_space.hpp"
#include "mrclip/metadata.hpp"
#include "mrclip/util.hpp"

namespace mrclip {

struct Tissue {
  std::string name;
  double t1_ms;
  double t2_ms;
  double pd;
};

// Relaxation constants quoted at 1.5 T.
inline std::vector<Tissue> default_tissues() {
  return {
      {"gray_matter", 1200.0, 80.0, 0.8},
      {"white_matter", 900.0, 70.0, 0.7},
      {"csf", 4000.0, 2000.0, 1.0},
      {"fat", 350.0, 120.0, 0.9},
      {"gray_matter_short_t2", 1100.0, 45.0, 0.75},
      {"white_matter_long_t1", 2000.0, 100.0, 0.65},
      {"csf_partial", 2500.0, 500.0, 0.95},
      {"fat_long_t2", 400.0, 180.0, 0.85},
      {"edema", 3000.0, 300.0, 0.6},
      {"csf_long_t1", 6000.0, 1000.0, 0.9},
      {"fluid_free", 8000.0, 1500.0, 0.85},
      {"marrow", 600.0, 90.0, 0.7},
  };
}

// Spin-echo steady state without TI, inversion recovery with TI; magnitude.
inline double signal(const Tissue& tissue, const MetadataRecord& record) {
  const double t2_decay = std::exp(-record.te_ms / tissue.t2_ms);
  if (record.ti_ms) {
    return std::abs(tissue.pd *
                    (1.0 - 2.0 * std::exp(-*record.ti_ms / tissue.t1_ms) +
                     std::exp(-record.tr_ms / tissue.t1_ms)) *
                    t2_decay);
  }
  const double flip = record.flip_angle_deg * std::numbers::pi / 180.0;
  return std::abs(tissue.pd * (1.0 - std::exp(-record.tr_ms / tissue.t1_ms)) * t2_decay *
                  std::sin(flip));
}

// T1 lengthens with field strength roughly as B0^(1/3); reference 1.5 T.
inline Tissue tissue_at_field(Tissue tissue, double field_tesla) {
  if (field_tesla > 0.0) tissue.t1_ms *= std::cbrt(field_tesla / 1.5);
  return tissue;
}

struct SynthConfig {
  std::vector<MetadataRecord> protocols;
  std::vector<Tissue> tissues = default_tissues();
  int scans = 1000;
  int slices_per_scan = 10;
  double noise_sigma = 0.002;
  double anatomy_jitter = 0.05;  // per-slice tissue fraction in [1 - j, 1 + j]
  std::uint64_t seed = 0;
};

// Acquisition families crossed with field strengths. Scanner and sequence
// tags are tied to physics-visible parameters so every label is identifiable
// from the signal.
struct ProtocolFamily {
  std::string sequence_type;
  std::string sequence_variant;
  double flip_angle_deg;
  std::optional<double> ti_ms;
};

inline std::vector<ProtocolFamily> default_families() {
  return {
      {"SE", "SK", 90.0, std::nullopt},
      {"GR", "SP", 20.0, std::nullopt},
      {"IR", "SK", 90.0, 150.0},
      {"IR", "SK\\SP", 90.0, 2500.0},
  };
}

struct ProtocolGridOptions {
  GridSpec cells = GridSpec::with_bins(5, 5);
  int positions_per_cell = 2;  // TE and TR sample points per cell axis
  double spread = 0.1;          // fraction of the cell width the points span
  std::vector<double> field_strengths{1.5, 3.0};
  std::vector<ProtocolFamily> families = default_families();
};

// Protocols spanning every cell of `cells`: positions_per_cell TE values and
// TR values spaced evenly over `spread` of each cell around its center, for
// each family and field strength.
inline std::vector<MetadataRecord> grid_protocols(const ProtocolGridOptions& options = {}) {
  options.cells.validate();
  const int k = std::max(1, options.positions_per_cell);
  const double spread = options.spread;
  auto position = [k, spread](int j) {
    return k == 1 ? 0.5 : 0.5 - 0.5 * spread + spread * j / (k - 1);
  };
  std::vector<double> tes, trs;
  for (int c = 0; c < options.cells.n_te; ++c) {
    for (int j = 0; j < k; ++j) {
      tes.push_back(options.cells.te_min_ms + options.cells.te_width() * (c + position(j)));
    }
  }
  for (int c = 0; c < options.cells.n_tr; ++c) {
    for (int j = 0; j < k; ++j) {
      trs.push_back(options.cells.tr_min_ms + options.cells.tr_width() * (c + position(j)));
    }
  }
  std::vector<MetadataRecord> protocols;
  for (double field : options.field_strengths) {
    for (const auto& family : options.families) {
      for (double te : tes) {
        for (double tr : trs) {
          MetadataRecord r;
          r.manufacturer = field < 2.0 ? "SIEMENS" : "GE MEDICAL SYSTEMS";
          r.scanner_model = field < 2.0 ? "AERA" : "SIGNA PREMIER";
          r.field_strength_tesla = field;
          r.sequence_type = family.sequence_type;
          r.sequence_variant = family.sequence_variant;
          r.flip_angle_deg = family.flip_angle_deg;
          r.ti_ms = family.ti_ms;
          r.te_ms = std::round(te * 100.0) / 100.0;
          r.tr_ms = std::round(tr * 100.0) / 100.0;
          r.voxel_spacing_mm = Spacing{0.9, 0.9, 3.0};
          protocols.push_back(canonicalize(std::move(r)));
        }
      }
    }
  }
  return protocols;
}

// Site-dependent free text that carries no label information.
inline const std::vector<std::string>& series_descriptions() {
  static const std::vector<std::string> kDescriptions = {
      "AX BRAIN", "ROUTINE HEAD", "SEQ 1", "RESEARCH PROTOCOL", "AXIAL 3MM", "CLINICAL"};
  return kDescriptions;
}

// Scans draw a protocol uniformly; each scan uses a seed derived from
// (seed, scan_id), so the output depends only on the config.
inline std::vector<SyntheticSlice> generate_dataset(const SynthConfig& config) {
  if (config.protocols.empty()) throw Error(ErrorKind::EmptyProtocolList);
  if (config.scans < 1 || config.slices_per_scan < 1) {
    throw Error(ErrorKind::InvalidConfig, "scans and slices_per_scan must be >= 1");
  }
  std::vector<SyntheticSlice> slices;
  slices.reserve(static_cast<std::size_t>(config.scans) *
                 static_cast<std::size_t>(config.slices_per_scan));
  const int depth = std::max(60, 2 * config.slices_per_scan);
  const auto candidates = select_slice_indices(depth);

  for (int scan = 0; scan < config.scans; ++scan) {
    Rng rng(derive_seed(config.seed, static_cast<std::uint64_t>(scan)));
    MetadataRecord record = config.protocols[rng.below(config.protocols.size())];
    record.num_slices = depth;
    record.series_description = series_descriptions()[rng.below(series_descriptions().size())];
    char id[32];
    std::snprintf(id, sizeof(id), "SYNTH-%06d", scan);
    record.source_id = id;

    std::vector<double> clean(config.tissues.size());
    const double gain = record.field_strength_tesla > 0.0 ? record.field_strength_tesla / 3.0 : 1.0;
    for (std::size_t t = 0; t < config.tissues.size(); ++t) {
      clean[t] = gain * signal(tissue_at_field(config.tissues[t], record.field_strength_tesla), record);
    }

    for (int s = 0; s < config.slices_per_scan; ++s) {
      SyntheticSlice slice;
      slice.record = record;
      slice.scan_id = scan;
      const std::size_t pick =
          candidates.size() * static_cast<std::size_t>(s) / static_cast<std::size_t>(config.slices_per_scan);
      slice.slice_index = candidates[pick];
      slice.feature.resize(clean.size());
      for (std::size_t t = 0; t < clean.size(); ++t) {
        const double fraction = rng.uniform(1.0 - config.anatomy_jitter, 1.0 + config.anatomy_jitter);
        slice.feature[t] = fraction * clean[t] + config.noise_sigma * rng.normal();
      }
      slices.push_back(std::move(slice));
    }
  }
  return slices;
}

}  // namespace mrclip
