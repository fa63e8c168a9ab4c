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

#ifndef QSCHED_CONFIG_HPP_
#define QSCHED_CONFIG_HPP_

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"
#include "qsched/calibrate.hpp"
#include "qsched/gmm.hpp"
#include "qsched/mlp.hpp"
#include "qsched/quant.hpp"
#include "qsched/sampler.hpp"
#include "qsched/schedule.hpp"

namespace qsched {

inline constexpr int kConfigVersion = 1;

struct ScheduleSection {
  double beta0 = 0.0085;
  double betaN = 0.012;
  int n_train = 1000;
};

struct QuantSection {
  QuantConfig bits{4, 8};
  int calib_states = 1024;
};

struct SamplerSection {
  SamplerKind kind = SamplerKind::kTcd;
  int steps = 4;
  double eta = 0.0;
  PreconditionCoeffs coeffs;
  int batch = 5000;
  double sigma_data = 0.5;
  double timestep_scaling = 10.0;
  bool record_trajectories = false;
};

struct CalibSection {
  double cx_lo = 0.90;
  double cx_hi = 1.10;
  double ceps_lo = 0.90;
  double ceps_hi = 1.10;
  double step = 0.01;
  double k = 2.0;
  ScorerSpec tc_scorer{"gmm_loglik", ""};
  ScorerSpec iq_scorer{"mode_sharpness", ""};
  int contexts = 5;
  int batch = 256;
  bool require_identity = true;
  int threads = 1;
};

struct RunConfig {
  int version = kConfigVersion;
  std::uint64_t seed = 0;
  std::string output_dir = "out";
  ScheduleSection schedule;
  GaussianMixture gmm;
  TrainingConfig denoiser;  // denoiser.seed mirrors the global seed
  QuantSection quant;
  SamplerSection sampler;
  CalibSection calib;

  // Strict: unknown keys, wrong types and a wrong version are schema errors;
  // out-of-range values are validation errors.
  static RunConfig from_json(const nlohmann::json& j);
  nlohmann::json to_json() const;
  void validate() const;

  NoiseSchedule build_noise_schedule() const;
  SamplerConfig sampler_config(const NoiseSchedule& schedule) const;
  JaqConfig jaq_config() const;
  CoeffGrid coeff_grid() const;
};

RunConfig load_config(const std::filesystem::path& path);

// FNV-1a 64 over the canonical serialization, as 16 hex digits.
std::string config_hash(const RunConfig& cfg);
std::uint64_t fnv1a64(std::string_view bytes);

}  // namespace qsched

#endif  // QSCHED_CONFIG_HPP_
