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
#include <cctype>
#include <cmath>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "mrclip/error.hpp"

namespace mrclip {

using Spacing = std::array<double, 3>;

// One acquisition's acquisition metadata, in canonical form once ingested:
// strings trimmed and uppercased, TE/TR finite, TI absent when there is no
// inversion pulse (never stored as 0).
struct MetadataRecord {
  std::string manufacturer;
  std::string scanner_model;
  double field_strength_tesla = 0.0;
  std::string sequence_type;
  std::string sequence_variant;
  std::optional<std::string> series_description;
  double flip_angle_deg = 0.0;
  double te_ms = 0.0;
  double tr_ms = 0.0;
  std::optional<double> ti_ms;
  std::optional<Spacing> voxel_spacing_mm;
  std::optional<int> num_slices;
  std::string source_id;

  bool operator==(const MetadataRecord&) const = default;
};

enum class Plane { Axial, Coronal, Sagittal };

inline std::string_view to_string(Plane plane) {
  switch (plane) {
    case Plane::Axial: return "AXIAL";
    case Plane::Coronal: return "CORONAL";
    case Plane::Sagittal: return "SAGITTAL";
  }
  return "AXIAL";
}

inline std::string canonical_string(std::string_view text) {
  auto is_space = [](unsigned char c) { return std::isspace(c) != 0 || c == '\0'; };
  std::size_t begin = 0, end = text.size();
  while (begin < end && is_space(static_cast<unsigned char>(text[begin]))) ++begin;
  while (end > begin && is_space(static_cast<unsigned char>(text[end - 1]))) --end;
  std::string out(text.substr(begin, end - begin));
  for (char& c : out) c = static_cast<char>(std::toupper(static_cast<unsigned char>(c)));
  return out;
}

// Canonicalizes strings and checks numeric ranges. Idempotent.
inline MetadataRecord canonicalize(MetadataRecord record) {
  record.manufacturer = canonical_string(record.manufacturer);
  record.scanner_model = canonical_string(record.scanner_model);
  record.sequence_type = canonical_string(record.sequence_type);
  record.sequence_variant = canonical_string(record.sequence_variant);
  record.source_id = canonical_string(record.source_id);
  if (record.series_description) {
    record.series_description = canonical_string(*record.series_description);
  }

  auto require = [](bool ok, const char* what) {
    if (!ok) throw Error(ErrorKind::MalformedNumeric, what);
  };
  require(std::isfinite(record.te_ms) && record.te_ms >= 0.0, "TE must be finite and >= 0");
  require(std::isfinite(record.tr_ms) && record.tr_ms >= 0.0, "TR must be finite and >= 0");
  require(std::isfinite(record.field_strength_tesla) && record.field_strength_tesla >= 0.0,
          "field strength must be finite and >= 0");
  require(std::isfinite(record.flip_angle_deg) && record.flip_angle_deg >= 0.0 &&
              record.flip_angle_deg < 360.0,
          "flip angle must lie in [0, 360)");
  if (record.ti_ms) {
    require(std::isfinite(*record.ti_ms) && *record.ti_ms >= 0.0, "TI must be finite and >= 0");
  }
  if (record.voxel_spacing_mm) {
    for (double s : *record.voxel_spacing_mm) {
      require(std::isfinite(s) && s > 0.0, "voxel spacing must be positive");
    }
  }
  if (record.num_slices) require(*record.num_slices > 0, "num_slices must be positive");
  return record;
}

// The slicing axis is the through-plane axis, i.e. the one with the largest
// spacing. Axis 0 -> sagittal, 1 -> coronal, 2 -> axial. Isotropic volumes are
// sliced axially; equal maxima on anisotropic volumes resolve to the lowest axis.
inline Plane infer_plane(const Spacing& spacing) {
  for (double s : spacing) {
    if (!(s > 0.0) || !std::isfinite(s)) throw Error(ErrorKind::NonPositiveSpacing);
  }
  const auto [lo, hi] = std::minmax_element(spacing.begin(), spacing.end());
  if (*hi - *lo <= 1e-6 * *hi) return Plane::Axial;

  std::size_t axis = 0;
  for (std::size_t i = 1; i < 3; ++i) {
    if (spacing[i] > spacing[axis]) axis = i;
  }
  static constexpr Plane kByAxis[] = {Plane::Sagittal, Plane::Coronal, Plane::Axial};
  return kByAxis[axis];
}

// Every second slice from the central window of at most 100 slices.
inline std::vector<int> select_slice_indices(int depth) {
  if (depth < 1) return {};
  const int window = std::min(depth, 100);
  const int start = (depth - window) / 2;
  std::vector<int> indices;
  indices.reserve(static_cast<std::size_t>((window + 1) / 2));
  for (int offset = 0; offset < window; offset += 2) indices.push_back(start + offset);
  return indices;
}

}  // namespace mrclip
