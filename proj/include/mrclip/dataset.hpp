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

#include <fstream>
#include <iomanip>
#include <limits>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "mrclip/error.hpp"
#include "mrclip/manifest.hpp"
#include "mrclip/metadata.hpp"
#include "mrclip/tensor.hpp"
#include "mrclip/util.hpp"

namespace mrclip {

// One slice-level image/metadata pair. Ingested DICOM records have no
// feature; synthetic slices carry the per-tissue signal vector.
struct SyntheticSlice {
  std::vector<double> feature;
  MetadataRecord record;
  int scan_id = 0;
  int slice_index = 0;

  // Slices of one volume share this key.
  const std::string& scan_key() const { return record.source_id; }
};

inline json slice_to_json(const SyntheticSlice& slice) {
  json obj = record_to_json(slice.record);
  obj["feature"] = slice.feature;
  obj["scan_id"] = slice.scan_id;
  obj["slice_index"] = slice.slice_index;
  return obj;
}

// Accepts both dataset lines and plain manifest lines (no feature).
inline SyntheticSlice slice_from_json(const json& obj) {
  SyntheticSlice slice;
  slice.record = record_from_json(obj);
  try {
    if (auto it = obj.find("feature"); it != obj.end() && !it->is_null()) {
      slice.feature = it->get<std::vector<double>>();
    }
    if (auto it = obj.find("scan_id"); it != obj.end() && !it->is_null()) {
      slice.scan_id = it->get<int>();
    }
    if (auto it = obj.find("slice_index"); it != obj.end() && !it->is_null()) {
      slice.slice_index = it->get<int>();
    }
  } catch (const json::exception& e) {
    throw Error(ErrorKind::MalformedJson, e.what());
  }
  return slice;
}

inline std::vector<std::string> read_lines(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorKind::Io, "cannot open " + path);
  std::vector<std::string> lines;
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.find_first_not_of(" \t") == std::string::npos) continue;
    lines.push_back(std::move(line));
  }
  return lines;
}

inline std::vector<SyntheticSlice> load_dataset(const std::string& path) {
  std::vector<SyntheticSlice> slices;
  std::size_t line_no = 0;
  for (const auto& line : read_lines(path)) {
    ++line_no;
    json obj = json::parse(line, nullptr, false);
    if (obj.is_discarded()) {
      throw Error(ErrorKind::MalformedJson, path + ":" + std::to_string(line_no));
    }
    slices.push_back(slice_from_json(obj));
  }
  if (slices.empty()) throw Error(ErrorKind::EmptyDataset, path);
  return slices;
}

inline void write_text(const std::string& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorKind::Io, "cannot write " + path);
  out << text;
  if (!out) throw Error(ErrorKind::Io, "write failed for " + path);
}

inline void save_dataset(const std::string& path, const std::vector<SyntheticSlice>& slices) {
  std::ostringstream os;
  for (const auto& s : slices) os << slice_to_json(s).dump() << '\n';
  write_text(path, os.str());
}

// Deterministic scan-level split: a scan is held out when the hash of its key
// falls below `fraction`.
inline bool is_holdout(const std::string& scan_key, double fraction, std::uint64_t seed) {
  const std::uint64_t h = derive_seed(seed, fnv1a64(scan_key));
  return static_cast<double>(h >> 11) * 0x1.0p-53 < fraction;
}

struct DatasetSplit {
  std::vector<SyntheticSlice> train;
  std::vector<SyntheticSlice> test;
};

inline DatasetSplit split_dataset(const std::vector<SyntheticSlice>& slices, double fraction,
                                  std::uint64_t seed) {
  DatasetSplit split;
  for (const auto& s : slices) {
    (is_holdout(s.scan_key(), fraction, seed) ? split.test : split.train).push_back(s);
  }
  return split;
}

inline Tensor feature_matrix(const std::vector<SyntheticSlice>& slices) {
  if (slices.empty()) return Tensor(0, 0);
  const std::size_t dim = slices.front().feature.size();
  Tensor out(slices.size(), dim);
  for (std::size_t i = 0; i < slices.size(); ++i) {
    if (slices[i].feature.size() != dim) {
      throw Error(ErrorKind::ShapeMismatch, "slice " + std::to_string(i) + " feature size");
    }
    std::copy(slices[i].feature.begin(), slices[i].feature.end(), out.row(i).begin());
  }
  return out;
}

inline std::vector<MetadataRecord> records_of(const std::vector<SyntheticSlice>& slices) {
  std::vector<MetadataRecord> records;
  records.reserve(slices.size());
  for (const auto& s : slices) records.push_back(s.record);
  return records;
}

// Counts per categorical tag and TE/TR/TI ranges, one item per line.
inline std::string dataset_summary(const std::vector<MetadataRecord>& records) {
  std::ostringstream os;
  os << "records " << records.size() << "\n";
  if (records.empty()) return os.str();
  auto tally = [&](const char* name, auto get) {
    std::map<std::string, std::size_t> counts;
    for (const auto& r : records) ++counts[get(r)];
    os << name << ":";
    for (const auto& [value, count] : counts) os << " " << (value.empty() ? "(none)" : value) << "=" << count;
    os << "\n";
  };
  tally("manufacturer", [](const MetadataRecord& r) { return r.manufacturer; });
  tally("scanner_model", [](const MetadataRecord& r) { return r.scanner_model; });
  tally("field_strength", [](const MetadataRecord& r) { return format_number(r.field_strength_tesla); });
  tally("sequence_type", [](const MetadataRecord& r) { return r.sequence_type; });
  tally("sequence_variant", [](const MetadataRecord& r) { return r.sequence_variant; });
  tally("plane", [](const MetadataRecord& r) {
    return r.voxel_spacing_mm ? std::string(to_string(infer_plane(*r.voxel_spacing_mm))) : std::string();
  });
  auto range = [&](const char* name, auto get) {
    double lo = std::numeric_limits<double>::infinity(), hi = -lo;
    std::size_t n = 0;
    for (const auto& r : records) {
      if (const std::optional<double> v = get(r)) {
        lo = std::min(lo, *v);
        hi = std::max(hi, *v);
        ++n;
      }
    }
    os << name << ": ";
    if (n == 0) {
      os << "absent\n";
    } else {
      os << format_number(lo) << ".." << format_number(hi) << " ms (" << n << " present)\n";
    }
  };
  range("te", [](const MetadataRecord& r) { return std::optional<double>(r.te_ms); });
  range("tr", [](const MetadataRecord& r) { return std::optional<double>(r.tr_ms); });
  range("ti", [](const MetadataRecord& r) { return r.ti_ms; });
  return os.str();
}

}  // namespace mrclip
