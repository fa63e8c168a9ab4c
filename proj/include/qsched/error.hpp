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

#ifndef QSCHED_ERROR_HPP_
#define QSCHED_ERROR_HPP_

#include <stdexcept>
#include <string>
#include <string_view>

namespace qsched {

// Stable error codes. The CLI prints to_string(code) in its error JSON, so
// existing spellings must not change.
enum class ErrorCode {
  kValidation,
  kOrdering,
  kNonFinite,
  kDegenerateCalibration,
  kSingularCorrection,
  kDivergence,
  kMissingCalibration,
  kScorer,
  kProtocol,
  kComparability,
  kSchema,
  kMissingArtifact,
  kIo,
};

std::string_view to_string(ErrorCode code);

class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& message)
      : std::runtime_error(message), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

}  // namespace qsched

#endif  // QSCHED_ERROR_HPP_
