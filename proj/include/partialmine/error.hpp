// Copyright 2026 The PartialMine Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//      http://www.apache.org/licenses/LICENSE-2.0
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

namespace partialmine {

enum class ErrorCode {
  kEmptyRegistry,
  kInvalidRegistry,
  kDegenerateCategory,
  kInvalidLabelMatrix,
  kRankDeficient,
  kBadFractions,
  kSchemaMismatch,
  kBadLabelCode,
  kIo,
  kNonFiniteActivation,
  kNotCommonCategory,
  kCacheMismatch,
  kShapeMismatch,
  kNoCommonCategories,
  kEpochMismatch,
  kUnknownSampleId,
  kNoHistory,
  kBadThreshold,
  kInvalidConfig,
  kInsufficientData,
  kDegenerateLabels,
  kNumericalFailure,
};

constexpr std::string_view error_code_name(ErrorCode code) {
  switch (code) {
    case ErrorCode::kEmptyRegistry: return "EmptyRegistry";
    case ErrorCode::kInvalidRegistry: return "InvalidRegistry";
    case ErrorCode::kDegenerateCategory: return "DegenerateCategory";
    case ErrorCode::kInvalidLabelMatrix: return "InvalidLabelMatrix";
    case ErrorCode::kRankDeficient: return "RankDeficient";
    case ErrorCode::kBadFractions: return "BadFractions";
    case ErrorCode::kSchemaMismatch: return "SchemaMismatch";
    case ErrorCode::kBadLabelCode: return "BadLabelCode";
    case ErrorCode::kIo: return "Io";
    case ErrorCode::kNonFiniteActivation: return "NonFiniteActivation";
    case ErrorCode::kNotCommonCategory: return "NotCommonCategory";
    case ErrorCode::kCacheMismatch: return "CacheMismatch";
    case ErrorCode::kShapeMismatch: return "ShapeMismatch";
    case ErrorCode::kNoCommonCategories: return "NoCommonCategories";
    case ErrorCode::kEpochMismatch: return "EpochMismatch";
    case ErrorCode::kUnknownSampleId: return "UnknownSampleId";
    case ErrorCode::kNoHistory: return "NoHistory";
    case ErrorCode::kBadThreshold: return "BadThreshold";
    case ErrorCode::kInvalidConfig: return "InvalidConfig";
    case ErrorCode::kInsufficientData: return "InsufficientData";
    case ErrorCode::kDegenerateLabels: return "DegenerateLabels";
    case ErrorCode::kNumericalFailure: return "NumericalFailure";
  }
  return "Unknown";
}

/// Every failure raised by the library carries one of the codes above; the
/// CLI maps them onto exit statuses.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& detail)
      : std::runtime_error(std::string(error_code_name(code)) + ": " + detail),
        code_(code) {}

  ErrorCode code() const noexcept { return code_; }

  /// True for failures caused by non-finite numbers during training.
  bool is_numerical() const noexcept {
    return code_ == ErrorCode::kNonFiniteActivation ||
           code_ == ErrorCode::kNumericalFailure;
  }

 private:
  ErrorCode code_;
};

}  // namespace partialmine
