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

#include <stdexcept>
#include <string>
#include <string_view>

namespace mrclip {

// Every failure the library reports carries one of these kinds. The CLI maps
// them onto exit codes, so new kinds must also be classified in
// is_numerical_failure().
enum class ErrorKind {
  // ingest
  MissingMagic,
  TruncatedElement,
  MissingRequiredTag,
  MalformedNumeric,
  MalformedJson,
  UnsupportedTransferSyntax,
  NonPositiveSpacing,
  // label space
  NonFiniteInput,
  EmptyDataset,
  TooFewDistinctPoints,
  IncompatibleRanges,
  InvalidConfig,
  LabelDecodeFailure,
  // model and loss
  ShapeMismatch,
  TokenIdOutOfRange,
  NonFiniteGradient,
  EmptyBatch,
  NonUnitEmbedding,
  NonPositiveTemperature,
  InvalidPlan,
  // synthetic data and evaluation
  EmptyProtocolList,
  EmptyGallery,
  EmptyImageSet,
  EmptyPredictionList,
  SingleClassTrainingSet,
  // files
  Io,
  BadCheckpoint,
};

inline std::string_view to_string(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::MissingMagic: return "MissingMagic";
    case ErrorKind::TruncatedElement: return "TruncatedElement";
    case ErrorKind::MissingRequiredTag: return "MissingRequiredTag";
    case ErrorKind::MalformedNumeric: return "MalformedNumeric";
    case ErrorKind::MalformedJson: return "MalformedJson";
    case ErrorKind::UnsupportedTransferSyntax: return "UnsupportedTransferSyntax";
    case ErrorKind::NonPositiveSpacing: return "NonPositiveSpacing";
    case ErrorKind::NonFiniteInput: return "NonFiniteInput";
    case ErrorKind::EmptyDataset: return "EmptyDataset";
    case ErrorKind::TooFewDistinctPoints: return "TooFewDistinctPoints";
    case ErrorKind::IncompatibleRanges: return "IncompatibleRanges";
    case ErrorKind::InvalidConfig: return "InvalidConfig";
    case ErrorKind::LabelDecodeFailure: return "LabelDecodeFailure";
    case ErrorKind::ShapeMismatch: return "ShapeMismatch";
    case ErrorKind::TokenIdOutOfRange: return "TokenIdOutOfRange";
    case ErrorKind::NonFiniteGradient: return "NonFiniteGradient";
    case ErrorKind::EmptyBatch: return "EmptyBatch";
    case ErrorKind::NonUnitEmbedding: return "NonUnitEmbedding";
    case ErrorKind::NonPositiveTemperature: return "NonPositiveTemperature";
    case ErrorKind::InvalidPlan: return "InvalidPlan";
    case ErrorKind::EmptyProtocolList: return "EmptyProtocolList";
    case ErrorKind::EmptyGallery: return "EmptyGallery";
    case ErrorKind::EmptyImageSet: return "EmptyImageSet";
    case ErrorKind::EmptyPredictionList: return "EmptyPredictionList";
    case ErrorKind::SingleClassTrainingSet: return "SingleClassTrainingSet";
    case ErrorKind::Io: return "Io";
    case ErrorKind::BadCheckpoint: return "BadCheckpoint";
  }
  return "Unknown";
}

// Divergence and degenerate-math failures, as opposed to bad input data.
inline bool is_numerical_failure(ErrorKind kind) {
  return kind == ErrorKind::NonFiniteGradient || kind == ErrorKind::NonUnitEmbedding ||
         kind == ErrorKind::NonPositiveTemperature;
}

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& detail = {})
      : std::runtime_error(detail.empty() ? std::string(to_string(kind))
                                          : std::string(to_string(kind)) + ": " + detail),
        kind_(kind),
        detail_(detail) {}

  ErrorKind kind() const noexcept { return kind_; }
  const std::string& detail() const noexcept { return detail_; }

 private:
  ErrorKind kind_;
  std::string detail_;
};

}  // namespace mrclip
