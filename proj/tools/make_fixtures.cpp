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

// Writes the DICOM fixture corpus and a manifest that lists for every
// file either the record a parser must produce or the error kind it must
// raise. Expected records are built from the field values directly, not by
// parsing the written bytes.
//
//   make_fixtures OUT_DIR MANIFEST

#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include "mrclip.hpp"

namespace fs = std::filesystem;
using namespace mrclip;
using dicom::Tag;
using dicom::Writer;

namespace {

struct Fixture {
  std::string name;
  std::vector<std::uint8_t> bytes;
  std::optional<MetadataRecord> expected;
  std::optional<ErrorKind> error;
};

MetadataRecord base_record() {
  MetadataRecord r;
  r.manufacturer = "SIEMENS";
  r.scanner_model = "AERA";
  r.field_strength_tesla = 1.5;
  r.sequence_type = "SE";
  r.sequence_variant = "SK";
  r.flip_angle_deg = 90;
  r.te_ms = 25;
  r.tr_ms = 1145;
  return r;
}

// Writes the standard tag set in ascending order with string values as given.
struct Fields {
  std::string manufacturer = "SIEMENS";
  std::string model = "AERA";
  std::optional<std::string> description;
  std::string seq_type = "SE";
  std::string seq_variant = "SK";
  std::optional<std::string> thickness;
  std::optional<std::string> tr = "1145";
  std::optional<std::string> te = "25";
  std::optional<std::string> ti;
  std::string field = "1.5";
  std::string flip = "90";
  std::optional<std::string> pixel_spacing;
  std::optional<std::string> transfer_syntax = std::string(dicom::kExplicitVrLittleEndian);
};

Writer& write_fields(Writer& w, const Fields& f) {
  if (f.transfer_syntax) w.element(dicom::kTransferSyntax, "UI", *f.transfer_syntax);
  w.element(dicom::kManufacturer, "LO", f.manufacturer);
  if (f.description) w.element(dicom::kSeriesDescription, "LO", *f.description);
  w.element(dicom::kScannerModel, "LO", f.model);
  w.element(dicom::kSequenceType, "CS", f.seq_type);
  w.element(dicom::kSequenceVariant, "CS", f.seq_variant);
  if (f.thickness) w.element(dicom::kSliceThickness, "DS", *f.thickness);
  if (f.tr) w.element(dicom::kRepetitionTime, "DS", *f.tr);
  if (f.te) w.element(dicom::kEchoTime, "DS", *f.te);
  if (f.ti) w.element(dicom::kInversionTime, "DS", *f.ti);
  w.element(dicom::kFieldStrength, "DS", f.field);
  w.element(dicom::kFlipAngle, "DS", f.flip);
  if (f.pixel_spacing) w.element(dicom::kPixelSpacing, "DS", *f.pixel_spacing);
  return w;
}

std::vector<std::uint8_t> bytes_of(const Fields& f) {
  Writer w;
  return write_fields(w, f).bytes();
}

std::vector<Fixture> build() {
  std::vector<Fixture> out;
  auto ok = [&](std::string name, std::vector<std::uint8_t> bytes, MetadataRecord r) {
    r.source_id = name;
    out.push_back({std::move(name), std::move(bytes), canonicalize(r), std::nullopt});
  };
  auto bad = [&](std::string name, std::vector<std::uint8_t> bytes, ErrorKind kind) {
    out.push_back({std::move(name), std::move(bytes), std::nullopt, kind});
  };

  ok("01_spin_echo_no_ti.dcm", bytes_of({}), base_record());

  {
    Fields f;
    f.seq_type = "IR";
    f.ti = "2500";
    f.tr = "9000";
    f.te = "120";
    MetadataRecord r = base_record();
    r.sequence_type = "IR";
    r.ti_ms = 2500;
    r.tr_ms = 9000;
    r.te_ms = 120;
    ok("02_inversion_recovery.dcm", bytes_of(f), r);
  }
  {
    Fields f;
    f.manufacturer = "GE MEDICAL SYSTEMS";
    f.model = "SIGNA PREMIER";
    f.field = "3";
    f.seq_type = "GR";
    f.seq_variant = "SP";
    f.flip = "20";
    f.te = "4.5";
    f.tr = "11.2";
    MetadataRecord r = base_record();
    r.manufacturer = "GE MEDICAL SYSTEMS";
    r.scanner_model = "SIGNA PREMIER";
    r.field_strength_tesla = 3;
    r.sequence_type = "GR";
    r.sequence_variant = "SP";
    r.flip_angle_deg = 20;
    r.te_ms = 4.5;
    r.tr_ms = 11.2;
    ok("03_gradient_echo_3t.dcm", bytes_of(f), r);
  }
  {
    Fields f;
    f.te = "25\\50";  // multi-echo: first value
    ok("04_multi_echo_te.dcm", bytes_of(f), base_record());
  }
  {
    Fields f;
    f.pixel_spacing = "0.5\\0.6";
    f.thickness = "4";
    MetadataRecord r = base_record();
    r.voxel_spacing_mm = Spacing{0.6, 0.5, 4.0};
    ok("05_multi_valued_spacing_axial.dcm", bytes_of(f), r);
  }
  {
    Fields f;
    f.pixel_spacing = "5\\1";
    f.thickness = "1";
    MetadataRecord r = base_record();
    r.voxel_spacing_mm = Spacing{1.0, 5.0, 1.0};
    ok("06_spacing_coronal.dcm", bytes_of(f), r);
  }
  {
    Fields f;
    f.pixel_spacing = "1\\5";
    f.thickness = "1";
    MetadataRecord r = base_record();
    r.voxel_spacing_mm = Spacing{5.0, 1.0, 1.0};
    ok("07_spacing_sagittal.dcm", bytes_of(f), r);
  }
  {
    Fields f;
    f.pixel_spacing = "1\\1";
    f.thickness = "1";
    MetadataRecord r = base_record();
    r.voxel_spacing_mm = Spacing{1.0, 1.0, 1.0};
    ok("08_isotropic_spacing.dcm", bytes_of(f), r);
  }
  {
    Writer w;
    write_fields(w, {});
    w.element(dicom::kPixelData, "OW", std::string(512, '\x07'));
    ok("09_with_pixel_data.dcm", w.bytes(), base_record());
  }
  {
    // Private and unknown elements around the interpreted ones.
    Writer w;
    w.element(dicom::kTransferSyntax, "UI", std::string(dicom::kExplicitVrLittleEndian));
    w.element({0x0008, 0x0060}, "CS", "MR");
    Fields f;
    f.transfer_syntax.reset();
    write_fields(w, f);
    w.element({0x0029, 0x1010}, "OB", std::string(33, '\x01'));
    w.element({0x0029, 0x1020}, "UT", "private free text");
    w.element({0x0040, 0x0254}, "LO", "PERFORMED STEP");
    ok("10_unknown_elements.dcm", w.bytes(), base_record());
  }
  {
    // Undefined-length sequence with two items, one holding a nested sequence.
    Writer w;
    w.element(dicom::kTransferSyntax, "UI", std::string(dicom::kExplicitVrLittleEndian));
    w.raw16(0x0008).raw16(0x1140).raw(std::vector<std::uint8_t>{'S', 'Q', 0, 0}).raw32(0xFFFFFFFFu);
    w.raw16(0xFFFE).raw16(0xE000).raw32(0xFFFFFFFFu);
    w.element({0x0008, 0x1150}, "UI", "1.2.3");
    w.raw16(0x0008).raw16(0x1199).raw(std::vector<std::uint8_t>{'S', 'Q', 0, 0}).raw32(0xFFFFFFFFu);
    w.raw16(0xFFFE).raw16(0xE000).raw32(0xFFFFFFFFu);
    w.element({0x0008, 0x1155}, "UI", "4.5.6");
    w.raw16(0xFFFE).raw16(0xE00D).raw32(0);
    w.raw16(0xFFFE).raw16(0xE0DD).raw32(0);
    w.raw16(0xFFFE).raw16(0xE00D).raw32(0);
    w.raw16(0xFFFE).raw16(0xE000).raw32(4).raw(std::vector<std::uint8_t>{1, 2, 3, 4});
    w.raw16(0xFFFE).raw16(0xE0DD).raw32(0);
    Fields f;
    f.transfer_syntax.reset();
    write_fields(w, f);
    ok("11_undefined_length_sequence.dcm", w.bytes(), base_record());
  }
  {
    Fields f;
    f.manufacturer = "  siemens ";
    f.model = "aera";
    f.seq_variant = "sk\\sp";
    f.description = " t1 ax post ";
    MetadataRecord r = base_record();
    r.sequence_variant = "SK\\SP";
    r.series_description = "T1 AX POST";
    ok("12_lowercase_padded.dcm", bytes_of(f), r);
  }
  {
    Fields f;
    f.te = "2.5E1";
    f.tr = " 1.145e3";
    ok("13_exponent_decimal.dcm", bytes_of(f), base_record());
  }
  {
    Fields f;
    f.te = "0";
    f.tr = "0";
    MetadataRecord r = base_record();
    r.te_ms = 0;
    r.tr_ms = 0;
    ok("14_localizer_zero_te_tr.dcm", bytes_of(f), r);
  }
  {
    Fields f;
    f.transfer_syntax.reset();
    ok("15_no_meta_transfer_syntax.dcm", bytes_of(f), base_record());
  }
  {
    Fields f;
    f.ti = "";
    ok("16_empty_ti_is_absent.dcm", bytes_of(f), base_record());
  }
  {
    Fields f;
    f.description = "AX T2 FLAIR";
    f.seq_type = "IR";
    f.seq_variant = "SK\\SP\\MP";
    f.ti = "2500";
    f.te = "82";
    f.tr = "9000";
    f.pixel_spacing = "0.4297\\0.4297";
    f.thickness = "5";
    MetadataRecord r = base_record();
    r.series_description = "AX T2 FLAIR";
    r.sequence_type = "IR";
    r.sequence_variant = "SK\\SP\\MP";
    r.ti_ms = 2500;
    r.te_ms = 82;
    r.tr_ms = 9000;
    r.voxel_spacing_mm = Spacing{0.4297, 0.4297, 5.0};
    ok("17_flair_full.dcm", bytes_of(f), r);
  }

  // Negative cases.
  {
    auto b = bytes_of({});
    b.resize(b.size() - 3);
    bad("18_truncated_value.dcm", b, ErrorKind::TruncatedElement);
  }
  {
    auto b = bytes_of({});
    b.resize(dicom::kPreambleSize + 4 + 30);
    bad("19_truncated_header.dcm", b, ErrorKind::TruncatedElement);
  }
  {
    Writer w;
    write_fields(w, {});
    w.raw16(0x0029).raw16(0x1030).raw(std::vector<std::uint8_t>{'O', 'B', 0, 0}).raw32(100000);
    w.raw(std::vector<std::uint8_t>(16, 0));
    bad("20_length_past_end.dcm", w.bytes(), ErrorKind::TruncatedElement);
  }
  bad("21_random_bytes.dcm", {0x13, 0x37, 0x00, 0xff, 0x42, 0x10, 0x20, 0x30, 0x40, 0x50},
      ErrorKind::MissingMagic);
  {
    Fields f;
    f.te.reset();
    bad("22_missing_te.dcm", bytes_of(f), ErrorKind::MissingRequiredTag);
  }
  {
    Fields f;
    f.tr.reset();
    bad("23_missing_tr.dcm", bytes_of(f), ErrorKind::MissingRequiredTag);
  }
  {
    Fields f;
    f.te = "abc";
    bad("24_malformed_te.dcm", bytes_of(f), ErrorKind::MalformedNumeric);
  }
  {
    Fields f;
    f.transfer_syntax = "1.2.840.10008.1.2";
    bad("25_implicit_vr.dcm", bytes_of(f), ErrorKind::UnsupportedTransferSyntax);
  }
  bad("26_magic_only.dcm", Writer().bytes(), ErrorKind::MissingRequiredTag);
  {
    Fields f;
    f.pixel_spacing = "0.5\\0.5\\0.5";
    f.thickness = "3";
    bad("27_spacing_three_values.dcm", bytes_of(f), ErrorKind::MalformedNumeric);
  }
  return out;
}

}  // namespace

int main(int argc, char** argv) {
  if (argc != 3) {
    std::cerr << "usage: make_fixtures OUT_DIR MANIFEST\n";
    return 1;
  }
  const fs::path dir(argv[1]);
  fs::create_directories(dir);
  std::ofstream manifest(argv[2]);
  for (const auto& f : build()) {
    std::ofstream out(dir / f.name, std::ios::binary);
    out.write(reinterpret_cast<const char*>(f.bytes.data()), static_cast<std::streamsize>(f.bytes.size()));
    json line = {{"file", f.name}};
    if (f.expected) line["record"] = record_to_json(*f.expected);
    if (f.error) line["error"] = std::string(to_string(*f.error));
    manifest << line.dump() << "\n";
  }
  std::cout << "wrote " << build().size() << " fixtures to " << dir.string() << "\n";
  return 0;
}
