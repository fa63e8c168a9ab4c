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

#ifndef QSCHED_RNG_HPP_
#define QSCHED_RNG_HPP_

#include <cstdint>
#include <initializer_list>

namespace qsched {

// Purposes partition the keyed stream space so that, e.g., the initial noise
// of sample 3 never collides with the step noise of sample 3.
enum class StreamPurpose : std::uint64_t {
  kInit = 1,
  kStepNoise = 2,
  kCorruption = 3,
  kTrainBatch = 4,
  kParamInit = 5,
  kHoldout = 6,
  kCalibStates = 7,
  kContext = 8,
  kData = 9,
};

// Hashes an ordered list of 64-bit words into a stream key.
std::uint64_t mix_key(std::initializer_list<std::uint64_t> parts);

// Counter-based generator: the whole sequence is a pure function of the key,
// so results never depend on evaluation order or thread count.
class KeyedStream {
 public:
  explicit KeyedStream(std::uint64_t key) : state_(key) {}
  KeyedStream(std::uint64_t seed, StreamPurpose purpose, std::uint64_t a,
              std::uint64_t b = 0)
      : state_(mix_key({seed, static_cast<std::uint64_t>(purpose), a, b})) {}

  std::uint64_t next_u64();
  // Uniform on the open interval (0, 1).
  double uniform();
  // Standard normal via Box-Muller; the second variate is cached.
  double normal();
  // Uniform integer in [lo, hi].
  int uniform_int(int lo, int hi);

 private:
  std::uint64_t state_;
  double cached_ = 0.0;
  bool has_cached_ = false;
};

}  // namespace qsched

#endif  // QSCHED_RNG_HPP_
