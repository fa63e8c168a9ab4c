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

#ifndef QSCHED_GMM_HPP_
#define QSCHED_GMM_HPP_

#include <cstdint>
#include <vector>

#include <Eigen/Dense>

#include "qsched/denoiser.hpp"
#include "qsched/rng.hpp"
#include "qsched/schedule.hpp"

namespace qsched {

// Isotropic Gaussian mixture used as the data distribution. Under the VP
// forward process the noised marginal is again a mixture with component i
// distributed as N(alpha_t mu_i, (alpha_t^2 s_i^2 + sigma_t^2) I).
struct GaussianMixture {
  std::vector<double> weights;
  std::vector<Eigen::VectorXd> means;
  std::vector<double> stds;

  int dim() const { return means.empty() ? 0 : static_cast<int>(means[0].size()); }
  int size() const { return static_cast<int>(weights.size()); }

  void validate() const;

  Eigen::VectorXd mean() const;
  Eigen::MatrixXd covariance() const;

  // log p_t(x) for the mixture convolved to noise level (alpha, sigma).
  double noised_log_density(const Eigen::VectorXd& x, double alpha,
                            double sigma) const;
  double log_density(const Eigen::VectorXd& x) const {
    return noised_log_density(x, 1.0, 0.0);
  }

  Eigen::VectorXd sample(KeyedStream& rng) const;
};

// Exact posterior mean E[x_0 | x_t] and the implied epsilon.
DenoiserEval gmm_denoiser_eval(const GaussianMixture& gmm,
                               const NoiseSchedule& schedule,
                               const Eigen::VectorXd& x_t, int t);

// grad_x log p_t(x_t) = (alpha_t E[x_0 | x_t] - x_t) / sigma_t^2.
Eigen::VectorXd gmm_score(const GaussianMixture& gmm,
                          const NoiseSchedule& schedule,
                          const Eigen::VectorXd& x_t, int t);

class GmmDenoiser final : public Denoiser {
 public:
  GmmDenoiser(GaussianMixture gmm, NoiseSchedule schedule);

  int dim() const override { return gmm_.dim(); }
  Batch predict_noise(const Batch& x_t, int t,
                      std::uint64_t first_sample) const override;

  const GaussianMixture& mixture() const { return gmm_; }

 private:
  GaussianMixture gmm_;
  NoiseSchedule schedule_;
};

// Draws `count` clean samples, sample i from stream (seed, kData, i).
Batch sample_mixture(const GaussianMixture& gmm, int count, std::uint64_t seed);

}  // namespace qsched

#endif  // QSCHED_GMM_HPP_
