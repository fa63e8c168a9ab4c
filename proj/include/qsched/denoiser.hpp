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

#ifndef QSCHED_DENOISER_HPP_
#define QSCHED_DENOISER_HPP_

#include <cstdint>
#include <memory>

#include <Eigen/Dense>

#include "qsched/schedule.hpp"

namespace qsched {

// One sample per row.
using Batch =
    Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

// Epsilon-prediction network E(x_t, t).
//
// Row r of a batch is sample `first_sample + r`; implementations that draw
// randomness key it on that index (never on the row position), so results are
// independent of how a batch is split.
class Denoiser {
 public:
  virtual ~Denoiser() = default;

  virtual int dim() const = 0;
  virtual Batch predict_noise(const Batch& x_t, int t,
                              std::uint64_t first_sample) const = 0;
};

// Network output plus the clean-sample estimate it implies,
// x0_hat = (x_t - sigma_t * eps_hat) / alpha_t.
struct DenoiserEval {
  Eigen::VectorXd epsilon_hat;
  Eigen::VectorXd x0_hat;
};

DenoiserEval make_eval(const NoiseSchedule& schedule,
                       const Eigen::VectorXd& x_t,
                       const Eigen::VectorXd& epsilon_hat, int t);

// E^Q = (1 + gamma) E + delta, delta ~ N(delta_mean, delta_std^2 I), with
// delta drawn from the stream keyed by (seed, sample index, t).
class CorruptedDenoiser final : public Denoiser {
 public:
  CorruptedDenoiser(std::shared_ptr<const Denoiser> base, double gamma,
                    Eigen::VectorXd delta_mean, double delta_std,
                    std::uint64_t seed);

  int dim() const override { return base_->dim(); }
  Batch predict_noise(const Batch& x_t, int t,
                      std::uint64_t first_sample) const override;

 private:
  std::shared_ptr<const Denoiser> base_;
  double gamma_;
  Eigen::VectorXd delta_mean_;
  double delta_std_;
  std::uint64_t seed_;
};

std::shared_ptr<const Denoiser> corrupt_denoiser(
    std::shared_ptr<const Denoiser> base, double gamma,
    const Eigen::VectorXd& delta_mean, double delta_std, std::uint64_t seed);

// Consistency-model preconditioning (LCM form). The boundary is t = 0 where
// c_skip = 1 and c_out = 0.
struct PreconditionFns {
  double sigma_data = 0.5;
  double timestep_scaling = 10.0;

  double c_skip(int t) const;
  double c_out(int t) const;
  double c_in(int /*t*/) const { return 1.0; }
  double c_noise(int t) const { return static_cast<double>(t); }

  void validate() const;
};

// F(x_t, t) = c_skip(t) x_t + c_out(t) x0_hat, where x0_hat is the
// network's clean-sample branch.
Eigen::VectorXd consistency_wrap(const DenoiserEval& net_output,
                                 const PreconditionFns& pf,
                                 const Eigen::VectorXd& x_t, int t);

// DDIM-style consistency function:
// F = (alpha_0/alpha_t) x_t - alpha_0 (sigma_t/alpha_t - sigma_0/alpha_0) eps.
Eigen::VectorXd ddim_consistency(const NoiseSchedule& schedule,
                                 const Eigen::VectorXd& x_t,
                                 const Eigen::VectorXd& epsilon_hat, int t);

}  // namespace qsched

#endif  // QSCHED_DENOISER_HPP_
