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

#ifndef QSCHED_SCHEDULE_HPP_
#define QSCHED_SCHEDULE_HPP_

#include <ostream>
#include <vector>

namespace qsched {

// Discrete variance-preserving forward process x_t = alpha_t x_0 + sigma_t eps.
//
// Timestep 0 is the clean image: alpha_bar_0 = 1 and
// alpha_bar_t = prod_{i<t} (1 - beta_i), so beta_t is the variance injected
// on the t -> t+1 transition. alpha_t = sqrt(alpha_bar_t) and
// sigma_t = sqrt(1 - alpha_bar_t), hence alpha_t^2 + sigma_t^2 = 1.
struct NoiseSchedule {
  int n_train = 0;
  std::vector<double> betas;
  std::vector<double> alpha_bars;
  std::vector<double> alphas;
  std::vector<double> sigmas;

  double alpha(int t) const { return alphas.at(t); }
  double sigma(int t) const { return sigmas.at(t); }
  double alpha_bar(int t) const { return alpha_bars.at(t); }
};

// Scaled-linear betas: beta_t = (sqrt(b0) + t/(n-1) * (sqrt(bN) - sqrt(b0)))^2.
NoiseSchedule build_schedule(double beta0, double betaN, int n_train);

// Strictly decreasing timesteps ending at 0. steps.size() - 1 transitions.
struct TimestepGrid {
  std::vector<int> steps;

  int n_steps() const { return static_cast<int>(steps.size()) - 1; }
};

// Uniform "trailing" spacing: for k = 0..n_steps-1 the k-th timestep is
// round_half_up(n_train * (n_steps - k) / n_steps) - 1, followed by the
// terminal 0 (not duplicated when the last entry already is 0).
TimestepGrid few_step_grid(const NoiseSchedule& schedule, int n_steps);

// s' = floor((1 - eta) * s), eta in [0, 1).
int sub_timestep(int s, double eta);

// alpha_bar_s / alpha_bar_{s'} = alpha_s^2 / alpha_{s'}^2. Shared by every
// noise-magnitude computation so equal inputs give bit-equal variances.
double retention_ratio(const NoiseSchedule& schedule, int s, int s_prime);

// sqrt(1 - alpha_s^2 / alpha_{s'}^2); exactly 0 when s' = s.
double eta_noise_std(const NoiseSchedule& schedule, int s, int s_prime);

// CSV with columns t,beta,alpha_bar,alpha,sigma.
void write_schedule_csv(const NoiseSchedule& schedule, std::ostream& out);

}  // namespace qsched

#endif  // QSCHED_SCHEDULE_HPP_
