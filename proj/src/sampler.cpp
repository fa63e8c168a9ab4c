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

#include "qsched/sampler.hpp"

#include <cmath>
#include <string>

#include "qsched/error.hpp"
#include "qsched/rng.hpp"

namespace qsched {
namespace {

void check_order(int t, int s, const NoiseSchedule& schedule) {
  if (!(t > s) || s < 0 || t >= schedule.n_train) {
    throw Error(ErrorCode::kOrdering,
                "sampling step needs n_train > t > s >= 0, got t=" +
                    std::to_string(t) + " s=" + std::to_string(s));
  }
}

void check_finite(const Batch& x) {
  if (!x.allFinite()) throw Error(ErrorCode::kNonFinite, "non-finite sample state");
}

// Adds noise_std * z when the std is positive; records z in `out`.
void inject_noise(StepOutput& out, double noise_std, const StepRng& rng) {
  out.noise_std = noise_std;
  if (noise_std > 0.0) {
    out.z = draw_step_noise(rng, out.x_s.rows(), out.x_s.cols());
    out.x_s += noise_std * out.z;
  }
}

StepOutput tcd_family_step(const Batch& x_t, int t, int s, const Denoiser& denoiser,
                           const NoiseSchedule& schedule, double eta,
                           const PreconditionCoeffs& coeffs, const StepRng& rng) {
  check_order(t, s, schedule);
  check_finite(x_t);
  StepOutput out;
  out.s_prime = sub_timestep(s, eta);
  out.eps_hat = denoiser.predict_noise(x_t, t, rng.first_sample);
  out.x_s = qsched_update(schedule, x_t, out.eps_hat, t, s, out.s_prime, coeffs);
  inject_noise(out, eta_noise_std(schedule, s, out.s_prime), rng);
  return out;
}

}  // namespace

std::string to_string(SamplerKind kind) {
  switch (kind) {
    case SamplerKind::kTcd: return "tcd";
    case SamplerKind::kQSched: return "qsched";
    case SamplerKind::kPtqd: return "ptqd";
    case SamplerKind::kLcm: return "lcm";
    case SamplerKind::kQSchedLcm: return "qsched_lcm";
  }
  return "tcd";
}

SamplerKind sampler_kind_from_string(const std::string& name) {
  if (name == "tcd") return SamplerKind::kTcd;
  if (name == "qsched") return SamplerKind::kQSched;
  if (name == "ptqd") return SamplerKind::kPtqd;
  if (name == "lcm") return SamplerKind::kLcm;
  if (name == "qsched_lcm") return SamplerKind::kQSchedLcm;
  throw Error(ErrorCode::kValidation, "unknown sampler kind '" + name + "'");
}

void PreconditionCoeffs::validate() const {
  if (!(c_x > 0.0) || !(c_eps > 0.0) || !std::isfinite(c_x) || !std::isfinite(c_eps)) {
    throw Error(ErrorCode::kValidation, "preconditioning coefficients must be > 0");
  }
}

void SamplerConfig::validate() const {
  if (!(eta >= 0.0 && eta < 1.0)) {
    throw Error(ErrorCode::kValidation, "eta must lie in [0, 1)");
  }
  if (grid.steps.size() < 2 || grid.steps.back() != 0) {
    throw Error(ErrorCode::kValidation, "grid needs >= 2 entries ending at 0");
  }
  for (std::size_t i = 1; i < grid.steps.size(); ++i) {
    if (!(grid.steps[i] < grid.steps[i - 1])) {
      throw Error(ErrorCode::kValidation, "grid must be strictly decreasing");
    }
  }
  coeffs.validate();
  precond.validate();
  if ((kind == SamplerKind::kPtqd) != ptqd.has_value()) {
    throw Error(ErrorCode::kValidation,
                "PTQD parameters are required for, and only for, the ptqd sampler");
  }
  if (ptqd) ptqd->validate();
}

Batch draw_step_noise(const StepRng& rng, Eigen::Index rows, Eigen::Index dim) {
  Batch z(rows, dim);
  for (Eigen::Index r = 0; r < rows; ++r) {
    KeyedStream stream(rng.seed, StreamPurpose::kStepNoise,
                       rng.first_sample + static_cast<std::uint64_t>(r),
                       static_cast<std::uint64_t>(rng.step_index));
    for (Eigen::Index j = 0; j < dim; ++j) z(r, j) = stream.normal();
  }
  return z;
}

Batch draw_initial_noise(std::uint64_t seed, std::uint64_t first_sample,
                         Eigen::Index rows, Eigen::Index dim) {
  Batch x(rows, dim);
  for (Eigen::Index r = 0; r < rows; ++r) {
    KeyedStream stream(seed, StreamPurpose::kInit,
                       first_sample + static_cast<std::uint64_t>(r));
    for (Eigen::Index j = 0; j < dim; ++j) x(r, j) = stream.normal();
  }
  return x;
}

Batch tcd_update(const NoiseSchedule& schedule, const Batch& x_t,
                 const Batch& eps, int t, int s, int s_prime) {
  const double a_t = schedule.alpha(t);
  const double sig_t = schedule.sigma(t);
  const double a_sp = schedule.alpha(s_prime);
  const double sig_sp = schedule.sigma(s_prime);
  const double ratio = schedule.alpha(s) / a_sp;
  const Batch x0 = (x_t - sig_t * eps) / a_t;
  return ratio * (a_sp * x0 + sig_sp * eps);
}

Batch qsched_update(const NoiseSchedule& schedule, const Batch& x_t,
                    const Batch& eps, int t, int s, int s_prime,
                    const PreconditionCoeffs& coeffs) {
  return tcd_update(schedule, coeffs.c_x * x_t, coeffs.c_eps * eps, t, s, s_prime);
}

Batch ptqd_correct(const Batch& eps_q, const PtqdParams& params) {
  params.validate();
  Batch out = eps_q;
  if (params.delta_mean.size() != 0) {
    if (params.delta_mean.size() != eps_q.cols()) {
      throw Error(ErrorCode::kValidation, "PTQD delta_mean dimension mismatch");
    }
    out.rowwise() -= params.delta_mean.transpose();
  }
  return out / (1.0 + params.gamma);
}

double ptqd_noise_std(const NoiseSchedule& schedule, int t, int s, int s_prime,
                      const PtqdParams& params) {
  params.validate();
  const double r = retention_ratio(schedule, s, s_prime);
  const double gain = schedule.sigma(s_prime) -
                      schedule.alpha(s_prime) * schedule.sigma(t) / schedule.alpha(t);
  const double q = params.delta_std * gain / (1.0 + params.gamma);
  const double var = 1.0 - r - r * (q * q);
  return var > 0.0 ? std::sqrt(var) : 0.0;
}

StepOutput tcd_sss_step(const Batch& x_t, int t, int s, const Denoiser& denoiser,
                        const NoiseSchedule& schedule, double eta,
                        const StepRng& rng) {
  check_order(t, s, schedule);
  check_finite(x_t);
  StepOutput out;
  out.s_prime = sub_timestep(s, eta);
  out.eps_hat = denoiser.predict_noise(x_t, t, rng.first_sample);
  out.x_s = tcd_update(schedule, x_t, out.eps_hat, t, s, out.s_prime);
  inject_noise(out, eta_noise_std(schedule, s, out.s_prime), rng);
  return out;
}

StepOutput qsched_step(const Batch& x_t, int t, int s, const Denoiser& denoiser,
                       const NoiseSchedule& schedule, double eta,
                       const PreconditionCoeffs& coeffs, const StepRng& rng) {
  coeffs.validate();
  return tcd_family_step(x_t, t, s, denoiser, schedule, eta, coeffs, rng);
}

StepOutput ptqd_step(const Batch& x_t, int t, int s, const Denoiser& q_denoiser,
                     const NoiseSchedule& schedule, double eta,
                     const PtqdParams& params, const StepRng& rng) {
  check_order(t, s, schedule);
  check_finite(x_t);
  params.validate();
  StepOutput out;
  out.s_prime = sub_timestep(s, eta);
  out.eps_hat = q_denoiser.predict_noise(x_t, t, rng.first_sample);
  const Batch corrected = ptqd_correct(out.eps_hat, params);
  out.x_s = tcd_update(schedule, x_t, corrected, t, s, out.s_prime);
  inject_noise(out, ptqd_noise_std(schedule, t, s, out.s_prime, params), rng);
  return out;
}

StepOutput lcm_multistep_step(const Batch& x_t, int t, int s,
                              const Denoiser& denoiser, const PreconditionFns& pf,
                              const NoiseSchedule& schedule, const StepRng& rng,
                              const std::optional<PreconditionCoeffs>& coeffs) {
  check_order(t, s, schedule);
  check_finite(x_t);
  pf.validate();
  const PreconditionCoeffs c = coeffs.value_or(PreconditionCoeffs{});
  c.validate();

  StepOutput out;
  out.s_prime = s;
  out.eps_hat = denoiser.predict_noise(pf.c_in(t) * x_t, t, rng.first_sample);
  const Batch scaled_x = c.c_x * x_t;
  const Batch x0_branch =
      (scaled_x - schedule.sigma(t) * (c.c_eps * out.eps_hat)) / schedule.alpha(t);
  const Batch denoised = pf.c_skip(t) * scaled_x + pf.c_out(t) * x0_branch;
  if (s == 0) {
    out.x_s = denoised;
    return out;
  }
  out.x_s = schedule.alpha(s) * denoised;
  inject_noise(out, schedule.sigma(s), rng);
  return out;
}

SampleResult sample_trajectory(const SamplerConfig& config, const Denoiser& denoiser,
                               const NoiseSchedule& schedule, int batch, bool record,
                               std::uint64_t first_sample) {
  config.validate();
  if (batch < 1) throw Error(ErrorCode::kValidation, "batch must be >= 1");
  if (config.grid.steps.front() >= schedule.n_train) {
    throw Error(ErrorCode::kValidation, "grid exceeds the schedule's n_train");
  }
  const int dim = denoiser.dim();
  Batch x = draw_initial_noise(config.seed, first_sample, batch, dim);

  SampleResult result;
  if (record) {
    result.trajectories.resize(batch);
    for (int i = 0; i < batch; ++i) {
      auto& tr = result.trajectories[i];
      tr.sample_index = first_sample + static_cast<std::uint64_t>(i);
      tr.kind = config.kind;
      tr.coeffs = config.coeffs;
      tr.eta = config.eta;
      tr.seed = config.seed;
      tr.steps.reserve(config.grid.n_steps());
    }
  }

  for (int j = 0; j < config.grid.n_steps(); ++j) {
    const int t = config.grid.steps[j];
    const int s = config.grid.steps[j + 1];
    const StepRng rng{config.seed, j, first_sample};
    StepOutput out;
    try {
      switch (config.kind) {
        case SamplerKind::kTcd:
          out = tcd_sss_step(x, t, s, denoiser, schedule, config.eta, rng);
          break;
        case SamplerKind::kQSched:
          out = qsched_step(x, t, s, denoiser, schedule, config.eta, config.coeffs, rng);
          break;
        case SamplerKind::kPtqd:
          out = ptqd_step(x, t, s, denoiser, schedule, config.eta, *config.ptqd, rng);
          break;
        case SamplerKind::kLcm:
          out = lcm_multistep_step(x, t, s, denoiser, config.precond, schedule, rng);
          break;
        case SamplerKind::kQSchedLcm:
          out = lcm_multistep_step(x, t, s, denoiser, config.precond, schedule, rng,
                                   config.coeffs);
          break;
      }
    } catch (const Error& e) {
      throw Error(e.code(), "step " + std::to_string(j) + ": " + e.what());
    }

    if (record) {
      for (int i = 0; i < batch; ++i) {
        StepRecord rec;
        rec.t = t;
        rec.s_prime = out.s_prime;
        rec.s = s;
        rec.x_before = x.row(i).transpose();
        rec.x_after = out.x_s.row(i).transpose();
        rec.eps_hat = out.eps_hat.row(i).transpose();
        if (out.z.size() > 0) rec.z = out.z.row(i).transpose();
        rec.noise_std = out.noise_std;
        result.trajectories[i].steps.push_back(std::move(rec));
      }
    }
    x = std::move(out.x_s);
  }

  if (record) {
    for (int i = 0; i < batch; ++i) result.trajectories[i].x0 = x.row(i).transpose();
  }
  result.samples = std::move(x);
  return result;
}

}  // namespace qsched
