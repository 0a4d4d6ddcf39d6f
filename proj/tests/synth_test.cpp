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

#include <gtest/gtest.h>

#include <cmath>
#include <set>

#include "generators.hpp"
#include "mrclip.hpp"

using namespace mrclip;

namespace {

// Spoiled spin echo and inversion recovery, written from the Bloch steady state.
double oracle_signal(double pd, double t1, double t2, double te, double tr, double fa_deg,
                     std::optional<double> ti) {
  const double e2 = std::exp(-te / t2);
  if (ti) return std::fabs(pd * (1 - 2 * std::exp(-*ti / t1) + std::exp(-tr / t1)) * e2);
  return std::fabs(pd * std::sin(fa_deg * M_PI / 180) * (1 - std::exp(-tr / t1)) * e2);
}

MetadataRecord protocol(double te, double tr, double fa, std::optional<double> ti = std::nullopt) {
  MetadataRecord r;
  r.manufacturer = "SIEMENS";
  r.scanner_model = "AERA";
  r.field_strength_tesla = 1.5;
  r.sequence_type = ti ? "IR" : "SE";
  r.sequence_variant = "SK";
  r.flip_angle_deg = fa;
  r.te_ms = te;
  r.tr_ms = tr;
  r.ti_ms = ti;
  return r;
}

}  // namespace

TEST(Signal, MatchesIndependentOracle) {
  Rng rng(1);
  for (int trial = 0; trial < 2000; ++trial) {
    const Tissue t{"x", rng.uniform(200, 5000), rng.uniform(20, 2000), rng.uniform(0.3, 1)};
    std::optional<double> ti;
    if (rng.below(2)) ti = rng.uniform(50, 4000);
    const auto r = protocol(rng.uniform(1, 200), rng.uniform(100, 10000), rng.uniform(5, 90), ti);
    EXPECT_NEAR(signal(t, r), oracle_signal(t.pd, t.t1_ms, t.t2_ms, r.te_ms, r.tr_ms, r.flip_angle_deg, r.ti_ms),
                1e-12);
  }
}

TEST(Signal, LongTrShortTeGivesProtonDensity) {
  for (const auto& t : default_tissues()) {
    EXPECT_NEAR(signal(t, protocol(0, 1e9, 90)), t.pd, 1e-12) << t.name;
  }
}

TEST(Signal, InversionNullPoint) {
  for (const auto& t : default_tissues()) {
    const auto r = protocol(0, 1e9, 90, t.t1_ms * std::log(2.0));
    EXPECT_NEAR(signal(t, r), 0.0, 1e-12) << t.name;
  }
}

TEST(Signal, NonNegativeAndMonotoneInTe) {
  Rng rng(2);
  for (int trial = 0; trial < 500; ++trial) {
    const auto& t = default_tissues()[rng.below(default_tissues().size())];
    const double tr = rng.uniform(100, 10000), fa = rng.uniform(5, 90);
    const double te = rng.uniform(1, 150);
    const double a = signal(t, protocol(te, tr, fa)), b = signal(t, protocol(te + 10, tr, fa));
    EXPECT_GE(a, 0.0);
    EXPECT_LT(b, a);
  }
}

TEST(Signal, FieldScalingOfT1) {
  const Tissue t{"x", 1000, 80, 1};
  EXPECT_DOUBLE_EQ(tissue_at_field(t, 1.5).t1_ms, 1000);
  EXPECT_NEAR(tissue_at_field(t, 3.0).t1_ms, 1000 * std::cbrt(2.0), 1e-9);
  EXPECT_NEAR(tissue_at_field(t, 12.0).t1_ms, 2000, 1e-9);
  EXPECT_EQ(tissue_at_field(t, 3.0).t2_ms, 80);
}

TEST(GridProtocols, CountsAndCellCoverage) {
  const auto protocols = grid_protocols();
  // 2 fields x 4 families x (5*2 TE) x (5*2 TR)
  EXPECT_EQ(protocols.size(), 800u);
  const GridSpec grid = GridSpec::with_bins(5, 5);
  std::set<GridBins> cells;
  for (const auto& p : protocols) {
    const auto bins = quantize_te_tr(p.te_ms, p.tr_ms, grid);
    cells.insert(bins);
    // Points sit near the cell center.
    const double te_frac = (p.te_ms - grid.te_min_ms) / grid.te_width() - bins.te;
    const double tr_frac = (p.tr_ms - grid.tr_min_ms) / grid.tr_width() - bins.tr;
    EXPECT_NEAR(te_frac, 0.5, 0.05 + 1e-9);
    EXPECT_NEAR(tr_frac, 0.5, 0.05 + 1e-9);
  }
  EXPECT_EQ(cells.size(), 25u);
}

TEST(GridProtocols, FullLabelSpaceHasTwoHundredLabels) {
  const auto protocols = grid_protocols();
  LabelConfig config;
  config.grouping = GridSpec::with_bins(5, 5);
  const auto built = build_label_space(protocols, config);
  EXPECT_EQ(built.space.size(), 200u);
}

TEST(Generate, ThousandScansCoverEveryCell) {
  SynthConfig config;
  config.protocols = grid_protocols();
  config.scans = 1000;
  config.slices_per_scan = 1;
  const auto slices = generate_dataset(config);
  ASSERT_EQ(slices.size(), 1000u);
  std::set<GridBins> cells;
  for (const auto& s : slices) cells.insert(quantize_te_tr(s.record.te_ms, s.record.tr_ms, GridSpec::with_bins(5, 5)));
  EXPECT_EQ(cells.size(), 25u);
}

TEST(Generate, BitwiseDeterministic) {
  SynthConfig config;
  config.protocols = grid_protocols();
  config.scans = 50;
  config.seed = 99;
  const auto a = generate_dataset(config), b = generate_dataset(config);
  ASSERT_EQ(a.size(), b.size());
  for (std::size_t i = 0; i < a.size(); ++i) {
    EXPECT_EQ(a[i].feature, b[i].feature);
    EXPECT_EQ(slice_to_json(a[i]).dump(), slice_to_json(b[i]).dump());
  }
  config.seed = 100;
  EXPECT_NE(generate_dataset(config)[0].feature, a[0].feature);
}

TEST(Generate, ScanPrefixIsStableUnderMoreScans) {
  SynthConfig config;
  config.protocols = grid_protocols();
  config.scans = 10;
  const auto small = generate_dataset(config);
  config.scans = 30;
  const auto large = generate_dataset(config);
  for (std::size_t i = 0; i < small.size(); ++i) EXPECT_EQ(small[i].feature, large[i].feature);
}

TEST(Generate, SlicesShareScanMetadataAndDifferByAnatomy) {
  SynthConfig config;
  config.protocols = grid_protocols();
  config.scans = 20;
  config.slices_per_scan = 8;
  config.noise_sigma = 0.0;
  const auto slices = generate_dataset(config);
  for (int scan = 0; scan < config.scans; ++scan) {
    std::set<int> indices;
    for (int s = 0; s < config.slices_per_scan; ++s) {
      const auto& a = slices[static_cast<std::size_t>(scan * config.slices_per_scan + s)];
      const auto& first = slices[static_cast<std::size_t>(scan * config.slices_per_scan)];
      EXPECT_EQ(a.scan_key(), first.scan_key());
      EXPECT_EQ(record_to_json(a.record).dump(), record_to_json(first.record).dump());
      EXPECT_EQ(a.scan_id, scan);
      indices.insert(a.slice_index);
      if (s > 0) {
        EXPECT_NE(a.feature, first.feature);
      }
    }
    EXPECT_EQ(indices.size(), static_cast<std::size_t>(config.slices_per_scan));
  }
}

TEST(Generate, CleanFeaturesFollowSignalModel) {
  SynthConfig config;
  config.protocols = grid_protocols();
  config.scans = 30;
  config.slices_per_scan = 2;
  config.noise_sigma = 0.0;
  config.anatomy_jitter = 0.0;
  for (const auto& s : generate_dataset(config)) {
    const auto& r = s.record;
    ASSERT_EQ(s.feature.size(), default_tissues().size());
    for (std::size_t t = 0; t < s.feature.size(); ++t) {
      const auto& tissue = default_tissues()[t];
      const double t1 = tissue.t1_ms * std::cbrt(r.field_strength_tesla / 1.5);
      const double expected = r.field_strength_tesla / 3.0 *
                              oracle_signal(tissue.pd, t1, tissue.t2_ms, r.te_ms, r.tr_ms, r.flip_angle_deg, r.ti_ms);
      EXPECT_NEAR(s.feature[t], expected, 1e-12);
    }
  }
}

TEST(Generate, NoiseHasConfiguredSpread) {
  SynthConfig config;
  config.protocols = {canonicalize(protocol(50, 2000, 90))};
  config.scans = 200;
  config.slices_per_scan = 10;
  config.noise_sigma = 0.01;
  config.anatomy_jitter = 0.0;
  const auto slices = generate_dataset(config);
  double sum = 0, sq = 0;
  std::size_t n = 0;
  for (const auto& s : slices) {
    const double clean = 0.5 * signal(default_tissues()[0], s.record);
    const double e = s.feature[0] - clean;
    sum += e;
    sq += e * e;
    ++n;
  }
  const double mean = sum / static_cast<double>(n);
  const double sd = std::sqrt(sq / static_cast<double>(n) - mean * mean);
  EXPECT_NEAR(mean, 0.0, 4 * 0.01 / std::sqrt(static_cast<double>(n)));
  EXPECT_NEAR(sd, 0.01, 0.001);
}

TEST(Generate, DistinctLabelsHaveDistinctCleanSignals) {
  // Euclidean gap of at least 6 noise sigmas: pairwise slice confusion under
  // isotropic noise stays below Phi(-3).
  const auto protocols = grid_protocols();
  LabelConfig lc;
  lc.grouping = GridSpec::with_bins(5, 5);
  const auto built = build_label_space(protocols, lc);
  std::vector<std::vector<double>> clean;
  for (const auto& p : protocols) {
    std::vector<double> f;
    for (const auto& t : default_tissues()) {
      f.push_back(p.field_strength_tesla / 3.0 * signal(tissue_at_field(t, p.field_strength_tesla), p));
    }
    clean.push_back(f);
  }
  const double floor = 6 * SynthConfig{}.noise_sigma;
  for (std::size_t i = 0; i < protocols.size(); ++i) {
    for (std::size_t j = i + 1; j < protocols.size(); ++j) {
      if (built.assignment[i] == built.assignment[j]) continue;
      double sq = 0;
      for (std::size_t t = 0; t < clean[i].size(); ++t) sq += (clean[i][t] - clean[j][t]) * (clean[i][t] - clean[j][t]);
      EXPECT_GT(std::sqrt(sq), floor) << i << " " << j;
    }
  }
}

TEST(Generate, TypedErrors) {
  SynthConfig config;
  try {
    generate_dataset(config);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::EmptyProtocolList);
  }
  config.protocols = grid_protocols();
  config.scans = 0;
  try {
    generate_dataset(config);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::InvalidConfig);
  }
}

TEST(Generate, DatasetRoundTripsThroughJsonLines) {
  SynthConfig config;
  config.protocols = grid_protocols();
  config.scans = 5;
  config.slices_per_scan = 3;
  const auto slices = generate_dataset(config);
  const std::string path = ::testing::TempDir() + "synth_roundtrip.jsonl";
  save_dataset(path, slices);
  const auto loaded = load_dataset(path);
  ASSERT_EQ(loaded.size(), slices.size());
  for (std::size_t i = 0; i < slices.size(); ++i) {
    EXPECT_EQ(loaded[i].feature, slices[i].feature);
    EXPECT_EQ(slice_to_json(loaded[i]).dump(), slice_to_json(slices[i]).dump());
  }
}
