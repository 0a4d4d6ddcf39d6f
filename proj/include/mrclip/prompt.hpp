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

#include <cctype>
#include <cstdint>
#include <set>
#include <string>
#include <string_view>
#include <vector>

#include "mrclip/metadata.hpp"
#include "mrclip/util.hpp"

namespace mrclip {

// Bumped whenever the sentence template changes; recorded in label-space files.
inline constexpr int kPromptTemplateVersion = 1;
inline constexpr std::size_t kDefaultVocabSize = 8192;

struct PromptConfig {
  bool include_series_description = false;
  bool numerical_only = false;
  double dropout_prob = 0.0;
  std::uint64_t seed = 0;
};

struct Prompt {
  std::string text;
  std::vector<std::int64_t> token_ids;
  std::set<std::string> fields_included;
};

// Lowercased word, number and unit tokens. Letters and digits never share a
// token, so "25ms" yields "25" and "ms"; a '.' between digits stays inside the
// number. Other ASCII punctuation separates tokens; bytes >= 0x80 are treated
// as letters.
inline std::vector<std::string> split_tokens(std::string_view text) {
  enum class Run { None, Word, Number };
  std::vector<std::string> tokens;
  std::string current;
  Run run = Run::None;
  auto flush = [&] {
    if (!current.empty()) tokens.push_back(std::move(current));
    current.clear();
    run = Run::None;
  };
  for (std::size_t i = 0; i < text.size(); ++i) {
    const auto c = static_cast<unsigned char>(text[i]);
    const bool digit = c >= '0' && c <= '9';
    const bool letter = std::isalpha(c) != 0 || c >= 0x80;
    const bool decimal_point = c == '.' && run == Run::Number && i + 1 < text.size() &&
                               text[i + 1] >= '0' && text[i + 1] <= '9';
    if (digit || decimal_point) {
      if (run != Run::Number) flush();
      run = Run::Number;
      current.push_back(static_cast<char>(c));
    } else if (letter) {
      if (run != Run::Word) flush();
      run = Run::Word;
      current.push_back(static_cast<char>(c < 0x80 ? std::tolower(c) : c));
    } else {
      flush();
    }
  }
  flush();
  return tokens;
}

inline std::vector<std::int64_t> tokenize(std::string_view text,
                                          std::size_t vocab_size = kDefaultVocabSize) {
  std::vector<std::int64_t> ids;
  for (const auto& token : split_tokens(text)) {
    ids.push_back(static_cast<std::int64_t>(fnv1a64(token) % vocab_size));
  }
  return ids;
}

namespace detail {

inline std::string lower(std::string_view text) {
  std::string out(text);
  for (char& c : out) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  return out;
}

}  // namespace detail

// Renders the fixed sentence template
//   "MRI scan acquired on a {manufacturer} {model} at {field} tesla, {plane} plane,
//    sequence {type} variant {variant}, flip angle {fa} degrees, echo time {te} ms,
//    repetition time {tr} ms, {inversion clause}[, series description: {desc}]."
// Flip angle, TE and TR are never dropped; every other clause is removed
// independently with probability dropout_prob.
inline Prompt render_prompt(const MetadataRecord& record, const PromptConfig& config,
                            std::size_t vocab_size = kDefaultVocabSize) {
  struct Clause {
    const char* field;
    std::string text;
    const char* separator;
    bool optional;
    bool numerical;
  };
  std::vector<Clause> clauses;

  std::string scanner = record.manufacturer;
  if (!record.scanner_model.empty()) {
    scanner += scanner.empty() ? record.scanner_model : " " + record.scanner_model;
  }
  if (!scanner.empty()) clauses.push_back({"scanner", "acquired on a " + scanner, ", ", true, false});
  clauses.push_back({"field_strength", "at " + format_number(record.field_strength_tesla) + " tesla",
                     " ", true, false});
  if (record.voxel_spacing_mm) {
    clauses.push_back({"plane",
                       detail::lower(to_string(infer_plane(*record.voxel_spacing_mm))) + " plane",
                       ", ", true, false});
  }
  clauses.push_back({"sequence",
                     "sequence " + record.sequence_type + " variant " + record.sequence_variant,
                     ", ", true, false});
  clauses.push_back({"flip_angle", "flip angle " + format_number(record.flip_angle_deg) + " degrees",
                     ", ", false, true});
  clauses.push_back({"te", "echo time " + format_number(record.te_ms) + " ms", ", ", false, true});
  clauses.push_back({"tr", "repetition time " + format_number(record.tr_ms) + " ms", ", ", false, true});
  clauses.push_back({"ti",
                     record.ti_ms ? "inversion time " + format_number(*record.ti_ms) + " ms"
                                  : std::string("no inversion pulse"),
                     ", ", true, true});
  if (config.include_series_description && record.series_description &&
      !record.series_description->empty()) {
    clauses.push_back({"series_description", "series description: " + *record.series_description,
                       ", ", true, false});
  }

  Rng rng(config.seed);
  Prompt prompt;
  prompt.text = "MRI scan";
  bool first = true;
  for (const auto& clause : clauses) {
    if (config.numerical_only && !clause.numerical) continue;
    // One draw per optional clause, so the stream layout does not depend on p.
    if (clause.optional) {
      const double draw = rng.uniform();
      if (draw < config.dropout_prob) continue;
    }
    prompt.text += first ? " " : clause.separator;
    prompt.text += clause.text;
    prompt.fields_included.insert(clause.field);
    first = false;
  }
  prompt.text += ".";
  prompt.token_ids = tokenize(prompt.text, vocab_size);
  return prompt;
}

}  // namespace mrclip
