/* Copyright 2026 The qsched-lab Authors. All Rights Reserved.

Licensed under the Apache License, Version 2.0 (the "License");
you may not use this file except in compliance with the License.
You may obtain a copy of the License at

    http://www.apache.org/licenses/LICENSE-2.0

Unless required by applicable law or agreed to in writing, software
distributed under the License is distributed on an "AS IS" BASIS,
WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
See the License for the specific language governing permissions and
limitations under the License.
==============================================================================*/

#include "qsched/error.hpp"

namespace qsched {

std::string_view to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::kValidation: return "validation_error";
    case ErrorCode::kOrdering: return "ordering_error";
    case ErrorCode::kNonFinite: return "non_finite_input";
    case ErrorCode::kDegenerateCalibration: return "degenerate_calibration";
    case ErrorCode::kSingularCorrection: return "singular_correction";
    case ErrorCode::kDivergence: return "training_divergence";
    case ErrorCode::kMissingCalibration: return "missing_calibration";
    case ErrorCode::kScorer: return "scorer_error";
    case ErrorCode::kProtocol: return "scorer_protocol_error";
    case ErrorCode::kComparability: return "comparability_error";
    case ErrorCode::kSchema: return "schema_violation";
    case ErrorCode::kMissingArtifact: return "missing_artifact";
    case ErrorCode::kIo: return "io_error";
  }
  return "unknown_error";
}

}  // namespace qsched
