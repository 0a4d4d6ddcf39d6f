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

#include <nlohmann/json.hpp>
#include <optional>
#include <string>
#include <string_view>

#include "mrclip/error.hpp"
#include "mrclip/metadata.hpp"

namespace mrclip {

using json = nlohmann::json;

namespace detail {

inline std::optional<double> optional_number(const json& obj, const char* key) {
  auto it = obj.find(key);
  if (it == obj.end() || it->is_null()) return std::nullopt;
  if (!it->is_number()) {
    throw Error(ErrorKind::MalformedNumeric, std::string(key) + " is not a number");
  }
  return it->get<double>();
}

inline std::string string_field(const json& obj, const char* key) {
  auto it = obj.find(key);
  if (it == obj.end() || it->is_null()) return {};
  if (!it->is_string()) throw Error(ErrorKind::MalformedJson, std::string(key) + " is not a string");
  return it->get<std::string>();
}

}  // namespace detail

// Reads a MetadataRecord from a parsed JSON object. Unknown keys are ignored.
inline MetadataRecord record_from_json(const json& obj) {
  if (!obj.is_object()) throw Error(ErrorKind::MalformedJson, "record is not an object");
  MetadataRecord record;
  const auto te = detail::optional_number(obj, "te_ms");
  if (!te) throw Error(ErrorKind::MissingRequiredTag, "TE");
  const auto tr = detail::optional_number(obj, "tr_ms");
  if (!tr) throw Error(ErrorKind::MissingRequiredTag, "TR");
  record.te_ms = *te;
  record.tr_ms = *tr;
  record.ti_ms = detail::optional_number(obj, "ti_ms");
  record.field_strength_tesla = detail::optional_number(obj, "field_strength_tesla").value_or(0.0);
  record.flip_angle_deg = detail::optional_number(obj, "flip_angle_deg").value_or(0.0);
  record.manufacturer = detail::string_field(obj, "manufacturer");
  record.scanner_model = detail::string_field(obj, "scanner_model");
  record.sequence_type = detail::string_field(obj, "sequence_type");
  record.sequence_variant = detail::string_field(obj, "sequence_variant");
  record.source_id = detail::string_field(obj, "source_id");
  if (auto it = obj.find("series_description"); it != obj.end() && !it->is_null()) {
    record.series_description = detail::string_field(obj, "series_description");
  }
  if (auto it = obj.find("voxel_spacing_mm"); it != obj.end() && !it->is_null()) {
    if (!it->is_array() || it->size() != 3) {
      throw Error(ErrorKind::MalformedNumeric, "voxel_spacing_mm must hold three numbers");
    }
    Spacing spacing{};
    for (std::size_t i = 0; i < 3; ++i) {
      if (!(*it)[i].is_number()) throw Error(ErrorKind::MalformedNumeric, "voxel_spacing_mm");
      spacing[i] = (*it)[i].get<double>();
    }
    record.voxel_spacing_mm = spacing;
  }
  if (auto it = obj.find("num_slices"); it != obj.end() && !it->is_null()) {
    if (!it->is_number_integer()) throw Error(ErrorKind::MalformedNumeric, "num_slices");
    record.num_slices = it->get<int>();
  }
  return canonicalize(std::move(record));
}

inline MetadataRecord parse_manifest_line(std::string_view line) {
  json obj = json::parse(line, nullptr, /*allow_exceptions=*/false);
  if (obj.is_discarded()) throw Error(ErrorKind::MalformedJson, std::string(line.substr(0, 80)));
  return record_from_json(obj);
}

inline json record_to_json(const MetadataRecord& r) {
  json obj = {
      {"manufacturer", r.manufacturer},
      {"scanner_model", r.scanner_model},
      {"field_strength_tesla", r.field_strength_tesla},
      {"sequence_type", r.sequence_type},
      {"sequence_variant", r.sequence_variant},
      {"series_description", r.series_description ? json(*r.series_description) : json(nullptr)},
      {"flip_angle_deg", r.flip_angle_deg},
      {"te_ms", r.te_ms},
      {"tr_ms", r.tr_ms},
      {"ti_ms", r.ti_ms ? json(*r.ti_ms) : json(nullptr)},
      {"voxel_spacing_mm", r.voxel_spacing_mm ? json(*r.voxel_spacing_mm) : json(nullptr)},
      {"num_slices", r.num_slices ? json(*r.num_slices) : json(nullptr)},
      {"source_id", r.source_id},
  };
  return obj;
}

}  // namespace mrclip
