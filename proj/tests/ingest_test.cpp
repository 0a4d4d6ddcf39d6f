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

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <iterator>

#include "generators.hpp"
#include "mrclip.hpp"

namespace fs = std::filesystem;
using namespace mrclip;
using mrclip::testing::random_record;

namespace {

const fs::path kFixtures = MRCLIP_FIXTURE_DIR;
const fs::path kManifest = kFixtures.parent_path() / "dicom_expected.jsonl";

std::vector<std::uint8_t> read_bytes(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

struct Expectation {
  std::string file;
  std::optional<MetadataRecord> record;
  std::string error;
};

std::vector<Expectation> expectations() {
  std::vector<Expectation> out;
  for (const auto& line : read_lines(kManifest.string())) {
    const json obj = json::parse(line);
    Expectation e;
    e.file = obj.at("file").get<std::string>();
    if (obj.contains("record")) e.record = record_from_json(obj.at("record"));
    if (obj.contains("error")) e.error = obj.at("error").get<std::string>();
    out.push_back(std::move(e));
  }
  return out;
}

MetadataRecord parse_file(const fs::path& path) {
  const auto bytes = read_bytes(path);
  return canonicalize(dicom::parse_dicom_tags(bytes, path.filename().string()));
}

}  // namespace

TEST(FixtureCorpus, HasAtLeastTwentyFilesAndEveryFileIsListed) {
  std::set<std::string> on_disk;
  for (const auto& entry : fs::directory_iterator(kFixtures)) on_disk.insert(entry.path().filename().string());
  const auto listed = expectations();
  EXPECT_GE(listed.size(), 20u);
  std::set<std::string> names;
  for (const auto& e : listed) names.insert(e.file);
  EXPECT_EQ(on_disk, names);
}

TEST(FixtureCorpus, EveryFileMatchesItsExpectation) {
  for (const auto& e : expectations()) {
    SCOPED_TRACE(e.file);
    const fs::path path = kFixtures / e.file;
    if (e.record) {
      EXPECT_EQ(parse_file(path), *e.record);
    } else {
      try {
        parse_file(path);
        ADD_FAILURE() << "expected " << e.error;
      } catch (const Error& err) {
        EXPECT_EQ(to_string(err.kind()), e.error);
      }
    }
  }
}

TEST(FixtureCorpus, CoversTheRequiredCases) {
  bool missing_ti = false, multi_spacing = false, truncated = false;
  for (const auto& e : expectations()) {
    if (e.record && !e.record->ti_ms) missing_ti = true;
    if (e.file.find("multi_valued_spacing") != std::string::npos && e.record) multi_spacing = true;
    if (e.error == "TruncatedElement") truncated = true;
  }
  EXPECT_TRUE(missing_ti);
  EXPECT_TRUE(multi_spacing);
  EXPECT_TRUE(truncated);
}

TEST(FixtureCorpus, EveryPrefixEitherParsesOrRaisesTypedError) {
  for (const auto& e : expectations()) {
    if (!e.record) continue;
    SCOPED_TRACE(e.file);
    const auto bytes = read_bytes(kFixtures / e.file);
    for (std::size_t len = 0; len < bytes.size(); ++len) {
      const std::span<const std::uint8_t> prefix(bytes.data(), len);
      try {
        dicom::parse_dicom_tags(prefix);
      } catch (const Error&) {
      } catch (...) {
        FAIL() << "untyped failure at length " << len;
      }
    }
  }
}

TEST(FixtureCorpus, ShortPrefixesLackTheMagic) {
  const auto bytes = read_bytes(kFixtures / "01_spin_echo_no_ti.dcm");
  for (std::size_t len : {0, 1, 128, 131}) {
    try {
      dicom::parse_dicom_tags(std::span<const std::uint8_t>(bytes.data(), len));
      FAIL();
    } catch (const Error& err) {
      EXPECT_EQ(err.kind(), ErrorKind::MissingMagic);
    }
  }
}

TEST(DicomRoundTrip, WriteThenParseIsIdentityOnRandomRecords) {
  Rng rng(20260101);
  for (int trial = 0; trial < 500; ++trial) {
    MetadataRecord original = random_record(rng);
    const auto bytes = dicom::write_dicom(original, rng.below(3) * 64);
    MetadataRecord parsed = canonicalize(dicom::parse_dicom_tags(bytes));
    EXPECT_EQ(parsed, original) << "trial " << trial << "\n"
                                << record_to_json(original).dump() << "\n"
                                << record_to_json(parsed).dump();
  }
}

TEST(DicomParse, DecimalStringAcceptsExponentAndRejectsGarbage) {
  EXPECT_DOUBLE_EQ(dicom::detail::parse_decimal_string(" 2.5E1 ", "x"), 25.0);
  EXPECT_DOUBLE_EQ(dicom::detail::parse_decimal_string("+1145", "x"), 1145.0);
  for (const char* bad : {"", "abc", "1.2.3", "12ms", "inf", "nan"}) {
    EXPECT_THROW(dicom::detail::parse_decimal_string(bad, "x"), Error) << bad;
  }
}

TEST(Manifest, NullTiMapsToAbsent) {
  const auto r = parse_manifest_line(R"({"te_ms":25,"tr_ms":1145,"ti_ms":null})");
  EXPECT_FALSE(r.ti_ms.has_value());
}

TEST(Manifest, StringsAreCanonicalized) {
  const auto r = parse_manifest_line(
      R"({"te_ms":25,"tr_ms":1145,"manufacturer":"  siemens ","sequence_type":"se"})");
  EXPECT_EQ(r.manufacturer, "SIEMENS");
  EXPECT_EQ(r.sequence_type, "SE");
}

TEST(Manifest, TypedErrors) {
  auto kind_of = [](std::string_view line) {
    try {
      parse_manifest_line(line);
    } catch (const Error& e) {
      return e.kind();
    }
    return ErrorKind::Io;  // sentinel: no error
  };
  EXPECT_EQ(kind_of("{not json"), ErrorKind::MalformedJson);
  EXPECT_EQ(kind_of("[1,2]"), ErrorKind::MalformedJson);
  EXPECT_EQ(kind_of(R"({"tr_ms":1145})"), ErrorKind::MissingRequiredTag);
  EXPECT_EQ(kind_of(R"({"te_ms":25})"), ErrorKind::MissingRequiredTag);
  EXPECT_EQ(kind_of(R"({"te_ms":"25","tr_ms":1})"), ErrorKind::MalformedNumeric);
  EXPECT_EQ(kind_of(R"({"te_ms":-1,"tr_ms":1})"), ErrorKind::MalformedNumeric);
  EXPECT_EQ(kind_of(R"({"te_ms":1,"tr_ms":1,"voxel_spacing_mm":[1,2]})"), ErrorKind::MalformedNumeric);
  EXPECT_EQ(kind_of(R"({"te_ms":1,"tr_ms":1,"voxel_spacing_mm":[1,0,2]})"), ErrorKind::MalformedNumeric);
}

TEST(Manifest, JsonRoundTripOnRandomRecords) {
  Rng rng(7);
  for (int trial = 0; trial < 300; ++trial) {
    MetadataRecord r = random_record(rng);
    r.source_id = mrclip::testing::random_word(rng, 1, 10);
    if (rng.uniform() < 0.5) r.num_slices = 1 + static_cast<int>(rng.below(300));
    EXPECT_EQ(parse_manifest_line(record_to_json(r).dump()), r);
  }
}

TEST(Canonicalize, IsIdempotent) {
  Rng rng(99);
  for (int trial = 0; trial < 300; ++trial) {
    MetadataRecord r = random_record(rng);
    r.manufacturer = "  " + r.manufacturer + "\t";
    r.scanner_model[0] = static_cast<char>(std::tolower(static_cast<unsigned char>(r.scanner_model[0])));
    const auto once = canonicalize(r);
    EXPECT_EQ(canonicalize(once), once);
  }
}

TEST(InferPlane, Examples) {
  EXPECT_EQ(infer_plane({1.0, 1.0, 5.0}), Plane::Axial);
  EXPECT_EQ(infer_plane({5.0, 1.0, 1.0}), Plane::Sagittal);
  EXPECT_EQ(infer_plane({1.0, 5.0, 1.0}), Plane::Coronal);
  EXPECT_EQ(infer_plane({1.0, 1.0, 1.0}), Plane::Axial);
  EXPECT_EQ(infer_plane({2.0, 2.0, 2.0 * (1 + 1e-7)}), Plane::Axial);
  // Equal maxima on an anisotropic volume: lowest axis wins.
  EXPECT_EQ(infer_plane({3.0, 3.0, 1.0}), Plane::Sagittal);
  EXPECT_EQ(infer_plane({1.0, 3.0, 3.0}), Plane::Coronal);
}

TEST(InferPlane, RejectsNonPositiveSpacing) {
  for (Spacing s : {Spacing{0, 1, 1}, Spacing{1, -1, 1}, Spacing{1, 1, std::nan("")}}) {
    try {
      infer_plane(s);
      FAIL();
    } catch (const Error& e) {
      EXPECT_EQ(e.kind(), ErrorKind::NonPositiveSpacing);
    }
  }
}

TEST(InferPlane, PermutingSpacingPermutesTheAxis) {
  const Plane by_axis[] = {Plane::Sagittal, Plane::Coronal, Plane::Axial};
  Rng rng(3);
  for (int trial = 0; trial < 500; ++trial) {
    Spacing s{rng.uniform(0.2, 6.0), rng.uniform(0.2, 6.0), rng.uniform(0.2, 6.0)};
    // Oracle: strict argmax, ties to the lower index.
    std::array<int, 3> perm{0, 1, 2};
    do {
      Spacing p{s[perm[0]], s[perm[1]], s[perm[2]]};
      int axis = 0;
      for (int i = 1; i < 3; ++i) {
        if (p[i] > p[axis]) axis = i;
      }
      EXPECT_EQ(infer_plane(p), by_axis[axis]);
    } while (std::next_permutation(perm.begin(), perm.end()));
  }
}

TEST(SelectSlices, Examples) {
  std::vector<int> expected;
  for (int i = 78; i <= 176; i += 2) expected.push_back(i);
  EXPECT_EQ(select_slice_indices(256), expected);
  EXPECT_EQ(expected.size(), 50u);

  expected.clear();
  for (int i = 0; i <= 98; i += 2) expected.push_back(i);
  EXPECT_EQ(select_slice_indices(100), expected);
  EXPECT_EQ(select_slice_indices(7), (std::vector<int>{0, 2, 4, 6}));
  EXPECT_EQ(select_slice_indices(1), (std::vector<int>{0}));
}

TEST(SelectSlices, WindowProperties) {
  for (int depth = 1; depth <= 600; ++depth) {
    const auto idx = select_slice_indices(depth);
    const int w = std::min(depth, 100);
    ASSERT_EQ(static_cast<int>(idx.size()), (w + 1) / 2) << depth;
    EXPECT_EQ(idx.front(), (depth - w) / 2) << depth;
    for (std::size_t i = 1; i < idx.size(); ++i) EXPECT_EQ(idx[i] - idx[i - 1], 2);
    EXPECT_LT(idx.back(), depth);
    if (depth >= 100) {
      EXPECT_EQ(idx.size(), 50u);
    }
  }
}
