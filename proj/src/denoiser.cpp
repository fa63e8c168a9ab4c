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

#include "qsched/denoiser.hpp"

#include <cmath>

#include "qsched/error.hpp"
#include "qsched/rng.hpp"

namespace qsched {

DenoiserEval make_eval(const NoiseSchedule& schedule,
                       const Eigen::VectorXd& x_t,
                       const Eigen::VectorXd& epsilon_hat, int t) {
  DenoiserEval eval;
  eval.epsilon_hat = epsilon_hat;
  eval.x0_hat = (x_t - schedule.sigma(t) * epsilon_hat) / schedule.alpha(t);
  return eval;
}

CorruptedDenoiser::CorruptedDenoiser(std::shared_ptr<const Denoiser> base,
                                     double gamma, Eigen::VectorXd delta_mean,
                                     double delta_std, std::uint64_t seed)
    : base_(std::move(base)),
      gamma_(gamma),
      delta_mean_(std::move(delta_mean)),
      delta_std_(delta_std),
      seed_(seed) {
  if (!base_) throw Error(ErrorCode::kValidation, "corruption needs a base denoiser");
  if (!(delta_std_ >= 0.0)) {
    throw Error(ErrorCode::kValidation, "delta_std must be >= 0");
  }
  if (delta_mean_.size() == 0) delta_mean_ = Eigen::VectorXd::Zero(base_->dim());
  if (delta_mean_.size() != base_->dim()) {
    throw Error(ErrorCode::kValidation, "delta_mean dimension mismatch");
  }
}

Batch CorruptedDenoiser::predict_noise(const Batch& x_t, int t,
                                       std::uint64_t first_sample) const {
  Batch out = base_->predict_noise(x_t, t, first_sample);
  out *= 1.0 + gamma_;
  out.rowwise() += delta_mean_.transpose();
  if (delta_std_ > 0.0) {
    for (Eigen::Index r = 0; r < out.rows(); ++r) {
      KeyedStream rng(seed_, StreamPurpose::kCorruption,
                      first_sample + static_cast<std::uint64_t>(r),
                      static_cast<std::uint64_t>(t));
      for (Eigen::Index j = 0; j < out.cols(); ++j) {
        out(r, j) += delta_std_ * rng.normal();
      }
    }
  }
  return out;
}

std::shared_ptr<const Denoiser> corrupt_denoiser(
    std::shared_ptr<const Denoiser> base, double gamma,
    const Eigen::VectorXd& delta_mean, double delta_std, std::uint64_t seed) {
  return std::make_shared<CorruptedDenoiser>(std::move(base), gamma, delta_mean,
                                             delta_std, seed);
}

double PreconditionFns::c_skip(int t) const {
  const double scaled = static_cast<double>(t) * timestep_scaling;
  const double sd2 = sigma_data * sigma_data;
  return sd2 / (scaled * scaled + sd2);
}

double PreconditionFns::c_out(int t) const {
  const double scaled = static_cast<double>(t) * timestep_scaling;
  return scaled / std::sqrt(scaled * scaled + sigma_data * sigma_data);
}

void PreconditionFns::validate() const {
  if (!(sigma_data > 0.0) || !(timestep_scaling > 0.0)) {
    throw Error(ErrorCode::kValidation,
                "preconditioning needs sigma_data > 0 and timestep_scaling > 0");
  }
}

Eigen::VectorXd consistency_wrap(const DenoiserEval& net_output,
                                 const PreconditionFns& pf,
                                 const Eigen::VectorXd& x_t, int t) {
  return pf.c_skip(t) * x_t + pf.c_out(t) * net_output.x0_hat;
}

Eigen::VectorXd ddim_consistency(const NoiseSchedule& schedule,
                                 const Eigen::VectorXd& x_t,
                                 const Eigen::VectorXd& epsilon_hat, int t) {
  const double a0 = schedule.alpha(0);
  const double s0 = schedule.sigma(0);
  const double at = schedule.alpha(t);
  const double st = schedule.sigma(t);
  return (a0 / at) * x_t - a0 * (st / at - s0 / a0) * epsilon_hat;
}

}  // namespace qsched
