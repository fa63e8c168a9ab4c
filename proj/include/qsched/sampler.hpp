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

#ifndef QSCHED_SAMPLER_HPP_
#define QSCHED_SAMPLER_HPP_

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "qsched/denoiser.hpp"
#include "qsched/quant.hpp"
#include "qsched/schedule.hpp"

namespace qsched {

enum class SamplerKind { kTcd, kQSched, kPtqd, kLcm, kQSchedLcm };

std::string to_string(SamplerKind kind);
SamplerKind sampler_kind_from_string(const std::string& name);

// Scalars applied to the running sample (c_x) and the network output (c_eps)
// inside a sampling step. (1, 1) is the unmodified schedule.
struct PreconditionCoeffs {
  double c_x = 1.0;
  double c_eps = 1.0;

  bool is_identity() const { return c_x == 1.0 && c_eps == 1.0; }
  void validate() const;
};

struct SamplerConfig {
  SamplerKind kind = SamplerKind::kTcd;
  TimestepGrid grid;
  double eta = 0.0;
  PreconditionCoeffs coeffs;
  std::optional<PtqdParams> ptqd;
  PreconditionFns precond;
  std::uint64_t seed = 0;

  void validate() const;
};

// Keyed randomness for one step: row r draws from
// (seed, first_sample + r, step_index, purpose).
struct StepRng {
  std::uint64_t seed = 0;
  int step_index = 0;
  std::uint64_t first_sample = 0;
};

// Standard normal rows from the keyed streams.
Batch draw_step_noise(const StepRng& rng, Eigen::Index rows, Eigen::Index dim);
Batch draw_initial_noise(std::uint64_t seed, std::uint64_t first_sample,
                         Eigen::Index rows, Eigen::Index dim);

struct StepOutput {
  Batch x_s;
  Batch eps_hat;     // raw network output at (x_t, t)
  Batch z;           // standard normal draw; empty when no noise was injected
  int s_prime = 0;
  double noise_std = 0.0;
};

// Deterministic part of the strategic stochastic step on a frozen eps:
// (alpha_s/alpha_s') (alpha_s' (x_t - sigma_t eps)/alpha_t + sigma_s' eps).
Batch tcd_update(const NoiseSchedule& schedule, const Batch& x_t,
                 const Batch& eps, int t, int s, int s_prime);

// Q-Sched update: tcd_update with x_t -> c_x x_t and eps -> c_eps eps.
Batch qsched_update(const NoiseSchedule& schedule, const Batch& x_t,
                    const Batch& eps, int t, int s, int s_prime,
                    const PreconditionCoeffs& coeffs);

// eps_tilde = (E^Q - delta_mean) / (1 + gamma).
Batch ptqd_correct(const Batch& eps_q, const PtqdParams& params);

// Injected-noise std after removing the variance the quantization noise
// already contributes, clamped at 0 when the remainder is negative.
double ptqd_noise_std(const NoiseSchedule& schedule, int t, int s, int s_prime,
                      const PtqdParams& params);

StepOutput tcd_sss_step(const Batch& x_t, int t, int s, const Denoiser& denoiser,
                        const NoiseSchedule& schedule, double eta,
                        const StepRng& rng);

StepOutput qsched_step(const Batch& x_t, int t, int s, const Denoiser& denoiser,
                       const NoiseSchedule& schedule, double eta,
                       const PreconditionCoeffs& coeffs, const StepRng& rng);

StepOutput ptqd_step(const Batch& x_t, int t, int s, const Denoiser& q_denoiser,
                     const NoiseSchedule& schedule, double eta,
                     const PtqdParams& params, const StepRng& rng);

// Multistep consistency sampling: x0 = F(x_t, t), then x_s = alpha_s x0 +
// sigma_s z (no noise at s = 0). With coeffs, c_x scales x_t and c_eps the
// network output inside F.
StepOutput lcm_multistep_step(const Batch& x_t, int t, int s,
                              const Denoiser& denoiser, const PreconditionFns& pf,
                              const NoiseSchedule& schedule, const StepRng& rng,
                              const std::optional<PreconditionCoeffs>& coeffs = {});

struct StepRecord {
  int t = 0;
  int s_prime = 0;
  int s = 0;
  Eigen::VectorXd x_before;
  Eigen::VectorXd x_after;
  Eigen::VectorXd eps_hat;
  Eigen::VectorXd z;  // empty when no noise was injected
  double noise_std = 0.0;
};

struct Trajectory {
  std::uint64_t sample_index = 0;
  SamplerKind kind = SamplerKind::kTcd;
  PreconditionCoeffs coeffs;
  double eta = 0.0;
  std::uint64_t seed = 0;
  std::vector<StepRecord> steps;
  Eigen::VectorXd x0;
};

struct SampleResult {
  Batch samples;
  std::vector<Trajectory> trajectories;  // empty unless recorded
};

// Runs the configured sampler over the grid for `batch` samples starting at
// sample index `first_sample`. Initial noise for sample i comes from
// (seed, i, init); step noise from (seed, i, step index).
SampleResult sample_trajectory(const SamplerConfig& config, const Denoiser& denoiser,
                               const NoiseSchedule& schedule, int batch,
                               bool record = false, std::uint64_t first_sample = 0);

}  // namespace qsched

#endif  // QSCHED_SAMPLER_HPP_
