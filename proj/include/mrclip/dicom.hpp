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

// Minimal DICOM part-10 reader/writer for explicit-VR little-endian files.
// Only the acquisition tags below are interpreted; everything else, pixel data
// included, is skipped by its declared length.

#pragma once

#include <cstdint>
#include <cstdlib>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "mrclip/error.hpp"
#include "mrclip/metadata.hpp"
#include "mrclip/util.hpp"

namespace mrclip::dicom {

struct Tag {
  std::uint16_t group;
  std::uint16_t element;

  constexpr std::uint32_t packed() const {
    return (static_cast<std::uint32_t>(group) << 16) | element;
  }
  auto operator<=>(const Tag&) const = default;
};

inline constexpr Tag kManufacturer{0x0008, 0x0070};
inline constexpr Tag kScannerModel{0x0008, 0x1090};
inline constexpr Tag kSeriesDescription{0x0008, 0x103E};
inline constexpr Tag kSequenceType{0x0018, 0x0020};
inline constexpr Tag kSequenceVariant{0x0018, 0x0021};
inline constexpr Tag kRepetitionTime{0x0018, 0x0080};
inline constexpr Tag kEchoTime{0x0018, 0x0081};
inline constexpr Tag kInversionTime{0x0018, 0x0082};
inline constexpr Tag kFieldStrength{0x0018, 0x0087};
inline constexpr Tag kFlipAngle{0x0018, 0x1314};
inline constexpr Tag kSliceThickness{0x0018, 0x0050};
inline constexpr Tag kPixelSpacing{0x0028, 0x0030};
inline constexpr Tag kTransferSyntax{0x0002, 0x0010};
inline constexpr Tag kPixelData{0x7FE0, 0x0010};

inline constexpr std::string_view kExplicitVrLittleEndian = "1.2.840.10008.1.2.1";
inline constexpr std::size_t kPreambleSize = 128;

namespace detail {

constexpr std::uint32_t kUndefinedLength = 0xFFFFFFFFu;
constexpr Tag kItem{0xFFFE, 0xE000};
constexpr Tag kItemDelimiter{0xFFFE, 0xE00D};
constexpr Tag kSequenceDelimiter{0xFFFE, 0xE0DD};

// VRs whose explicit encoding uses 2 reserved bytes and a 32-bit length.
inline bool has_long_length(std::string_view vr) {
  return vr == "OB" || vr == "OD" || vr == "OF" || vr == "OL" || vr == "OV" || vr == "OW" ||
         vr == "SQ" || vr == "SV" || vr == "UC" || vr == "UN" || vr == "UR" || vr == "UT" ||
         vr == "UV";
}

class Reader {
 public:
  explicit Reader(std::span<const std::uint8_t> bytes, std::size_t pos = 0)
      : bytes_(bytes), pos_(pos) {}

  bool at_end() const { return pos_ >= bytes_.size(); }
  std::size_t remaining() const { return bytes_.size() - pos_; }

  void need(std::size_t n, const char* what) const {
    if (remaining() < n) throw Error(ErrorKind::TruncatedElement, what);
  }

  std::uint16_t u16() {
    need(2, "element header");
    const auto v = static_cast<std::uint16_t>(bytes_[pos_] | (bytes_[pos_ + 1] << 8));
    pos_ += 2;
    return v;
  }

  std::uint32_t u32() {
    need(4, "element header");
    std::uint32_t v = 0;
    for (int i = 3; i >= 0; --i) v = (v << 8) | bytes_[pos_ + static_cast<std::size_t>(i)];
    pos_ += 4;
    return v;
  }

  std::string_view text(std::size_t n) {
    need(n, "element value");
    std::string_view view(reinterpret_cast<const char*>(bytes_.data() + pos_), n);
    pos_ += n;
    return view;
  }

  void skip(std::size_t n, const char* what) {
    need(n, what);
    pos_ += n;
  }

  Tag tag() {
    const auto group = u16();
    const auto element = u16();
    return Tag{group, element};
  }

 private:
  std::span<const std::uint8_t> bytes_;
  std::size_t pos_;
};

// Skips the body of an undefined-length element: either a sequence of items
// (SQ) or encapsulated pixel fragments, terminated by a sequence delimiter.
inline void skip_undefined(Reader& in, int depth);

inline void skip_dataset_until_item_end(Reader& in, int depth) {
  while (true) {
    const Tag tag = in.tag();
    if (tag == kItemDelimiter) {
      in.u32();
      return;
    }
    const std::string vr(in.text(2));
    std::uint32_t length;
    if (has_long_length(vr)) {
      in.skip(2, "element header");
      length = in.u32();
    } else {
      length = in.u16();
    }
    if (length == kUndefinedLength) {
      skip_undefined(in, depth + 1);
    } else {
      in.skip(length, "element value");
    }
  }
}

inline void skip_undefined(Reader& in, int depth) {
  if (depth > 64) throw Error(ErrorKind::TruncatedElement, "nesting too deep");
  while (true) {
    const Tag tag = in.tag();
    const std::uint32_t length = in.u32();
    if (tag == kSequenceDelimiter) return;
    if (tag != kItem) throw Error(ErrorKind::TruncatedElement, "expected item tag");
    if (length == kUndefinedLength) {
      skip_dataset_until_item_end(in, depth);
    } else {
      in.skip(length, "item value");
    }
  }
}

inline std::string trim_value(std::string_view raw) {
  std::size_t end = raw.size();
  while (end > 0 && (raw[end - 1] == ' ' || raw[end - 1] == '\0')) --end;
  std::size_t begin = 0;
  while (begin < end && raw[begin] == ' ') ++begin;
  return std::string(raw.substr(begin, end - begin));
}

inline std::vector<std::string> split_multi(const std::string& value) {
  std::vector<std::string> parts;
  std::size_t start = 0;
  while (true) {
    const auto pos = value.find('\\', start);
    parts.push_back(trim_value(std::string_view(value).substr(start, pos - start)));
    if (pos == std::string::npos) break;
    start = pos + 1;
  }
  return parts;
}

// Decimal string: optional sign, digits, optional fraction, optional exponent.
inline double parse_decimal_string(const std::string& raw, const char* what) {
  const std::string value = trim_value(raw);
  if (value.empty()) throw Error(ErrorKind::MalformedNumeric, std::string(what) + ": empty");
  for (char c : value) {
    const bool ok = (c >= '0' && c <= '9') || c == '+' || c == '-' || c == '.' || c == 'e' ||
                    c == 'E';
    if (!ok) throw Error(ErrorKind::MalformedNumeric, std::string(what) + ": '" + value + "'");
  }
  char* end = nullptr;
  const double parsed = std::strtod(value.c_str(), &end);
  if (end != value.c_str() + value.size() || !std::isfinite(parsed)) {
    throw Error(ErrorKind::MalformedNumeric, std::string(what) + ": '" + value + "'");
  }
  return parsed;
}

}  // namespace detail

// Reads the interpreted tags from a part-10 file. `source_id` is carried into
// the record unchanged (before canonicalization).
inline MetadataRecord parse_dicom_tags(std::span<const std::uint8_t> bytes,
                                       std::string_view source_id = {}) {
  if (bytes.size() < kPreambleSize + 4 ||
      std::string_view(reinterpret_cast<const char*>(bytes.data() + kPreambleSize), 4) !=
          "DICM") {
    throw Error(ErrorKind::MissingMagic);
  }

  std::map<Tag, std::string> values;
  detail::Reader in(bytes, kPreambleSize + 4);
  while (!in.at_end()) {
    const Tag tag = in.tag();
    const std::string vr(in.text(2));
    std::uint32_t length;
    if (detail::has_long_length(vr)) {
      in.skip(2, "element header");
      length = in.u32();
    } else {
      length = in.u16();
    }
    if (length == detail::kUndefinedLength) {
      detail::skip_undefined(in, 0);
      continue;
    }
    switch (tag.packed()) {
      case kManufacturer.packed():
      case kScannerModel.packed():
      case kSeriesDescription.packed():
      case kSequenceType.packed():
      case kSequenceVariant.packed():
      case kRepetitionTime.packed():
      case kEchoTime.packed():
      case kInversionTime.packed():
      case kFieldStrength.packed():
      case kFlipAngle.packed():
      case kSliceThickness.packed():
      case kPixelSpacing.packed():
      case kTransferSyntax.packed():
        values[tag] = detail::trim_value(in.text(length));
        break;
      default:
        in.skip(length, "element value");
    }
  }

  if (auto it = values.find(kTransferSyntax);
      it != values.end() && it->second != kExplicitVrLittleEndian) {
    throw Error(ErrorKind::UnsupportedTransferSyntax, it->second);
  }

  auto text = [&](Tag tag) -> std::optional<std::string> {
    auto it = values.find(tag);
    if (it == values.end()) return std::nullopt;
    return it->second;
  };
  auto number = [&](Tag tag, const char* what) -> std::optional<double> {
    auto raw = text(tag);
    if (!raw || raw->empty()) return std::nullopt;
    return detail::parse_decimal_string(detail::split_multi(*raw).front(), what);
  };

  MetadataRecord record;
  record.source_id = std::string(source_id);
  const auto te = number(kEchoTime, "EchoTime");
  if (!te) throw Error(ErrorKind::MissingRequiredTag, "TE");
  const auto tr = number(kRepetitionTime, "RepetitionTime");
  if (!tr) throw Error(ErrorKind::MissingRequiredTag, "TR");
  record.te_ms = *te;
  record.tr_ms = *tr;
  record.ti_ms = number(kInversionTime, "InversionTime");
  record.field_strength_tesla = number(kFieldStrength, "MagneticFieldStrength").value_or(0.0);
  record.flip_angle_deg = number(kFlipAngle, "FlipAngle").value_or(0.0);
  record.manufacturer = text(kManufacturer).value_or("");
  record.scanner_model = text(kScannerModel).value_or("");
  record.sequence_type = text(kSequenceType).value_or("");
  record.sequence_variant = text(kSequenceVariant).value_or("");
  record.series_description = text(kSeriesDescription);

  const auto pixel = text(kPixelSpacing);
  const auto thickness = number(kSliceThickness, "SliceThickness");
  if (pixel && thickness && !pixel->empty()) {
    const auto parts = detail::split_multi(*pixel);
    if (parts.size() != 2) {
      throw Error(ErrorKind::MalformedNumeric, "PixelSpacing needs two values: '" + *pixel + "'");
    }
    // Pixel spacing is (row spacing, column spacing); the triple is (x, y, z).
    const double row = detail::parse_decimal_string(parts[0], "PixelSpacing");
    const double col = detail::parse_decimal_string(parts[1], "PixelSpacing");
    record.voxel_spacing_mm = Spacing{col, row, *thickness};
  }
  return canonicalize(std::move(record));
}

// Builds explicit-VR little-endian part-10 bytes. Used for fixtures and for
// exporting synthetic records; tags are emitted in ascending order.
class Writer {
 public:
  Writer() {
    bytes_.assign(kPreambleSize, 0);
    bytes_.insert(bytes_.end(), {'D', 'I', 'C', 'M'});
  }

  Writer& element(Tag tag, std::string_view vr, std::string value) {
    // Even length; text pads with a space, UI and binary with NUL.
    if (value.size() % 2 != 0) value.push_back(vr == "UI" || vr == "OB" ? '\0' : ' ');
    put16(tag.group);
    put16(tag.element);
    bytes_.push_back(static_cast<std::uint8_t>(vr[0]));
    bytes_.push_back(static_cast<std::uint8_t>(vr[1]));
    if (detail::has_long_length(vr)) {
      put16(0);
      put32(static_cast<std::uint32_t>(value.size()));
    } else {
      put16(static_cast<std::uint16_t>(value.size()));
    }
    bytes_.insert(bytes_.end(), value.begin(), value.end());
    return *this;
  }

  // Raw bytes for crafting unusual structures (undefined lengths, garbage).
  Writer& raw(std::span<const std::uint8_t> data) {
    bytes_.insert(bytes_.end(), data.begin(), data.end());
    return *this;
  }

  Writer& raw16(std::uint16_t v) { put16(v); return *this; }
  Writer& raw32(std::uint32_t v) { put32(v); return *this; }

  const std::vector<std::uint8_t>& bytes() const { return bytes_; }

 private:
  void put16(std::uint16_t v) {
    bytes_.push_back(static_cast<std::uint8_t>(v & 0xff));
    bytes_.push_back(static_cast<std::uint8_t>(v >> 8));
  }
  void put32(std::uint32_t v) {
    for (int i = 0; i < 4; ++i) bytes_.push_back(static_cast<std::uint8_t>((v >> (8 * i)) & 0xff));
  }

  std::vector<std::uint8_t> bytes_;
};

// Serializes the tags parse_dicom_tags reads. Spacing is written only when all
// three values are present; num_slices and source_id have no tag.
inline std::vector<std::uint8_t> write_dicom(const MetadataRecord& record,
                                             std::size_t pixel_bytes = 0) {
  Writer out;
  out.element(kTransferSyntax, "UI", std::string(kExplicitVrLittleEndian));
  out.element(kManufacturer, "LO", record.manufacturer);
  if (record.series_description) out.element(kSeriesDescription, "LO", *record.series_description);
  out.element(kScannerModel, "LO", record.scanner_model);
  out.element(kSequenceType, "CS", record.sequence_type);
  out.element(kSequenceVariant, "CS", record.sequence_variant);
  if (record.voxel_spacing_mm) {
    out.element(kSliceThickness, "DS", format_number((*record.voxel_spacing_mm)[2]));
  }
  out.element(kRepetitionTime, "DS", format_number(record.tr_ms));
  out.element(kEchoTime, "DS", format_number(record.te_ms));
  if (record.ti_ms) out.element(kInversionTime, "DS", format_number(*record.ti_ms));
  out.element(kFieldStrength, "DS", format_number(record.field_strength_tesla));
  out.element(kFlipAngle, "DS", format_number(record.flip_angle_deg));
  if (record.voxel_spacing_mm) {
    const auto& s = *record.voxel_spacing_mm;
    out.element(kPixelSpacing, "DS", format_number(s[1]) + "\\" + format_number(s[0]));
  }
  if (pixel_bytes > 0) out.element(kPixelData, "OW", std::string(pixel_bytes, '\x11'));
  return out.bytes();
}

}  // namespace mrclip::dicom
