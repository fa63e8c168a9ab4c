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

#ifndef QSCHED_ANALYSIS_HPP_
#define QSCHED_ANALYSIS_HPP_

#include <map>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "qsched/denoiser.hpp"
#include "qsched/gmm.hpp"
#include "qsched/sampler.hpp"
#include "qsched/schedule.hpp"

namespace qsched {

// Affine coefficients of one strategic stochastic step t -> s (via s'):
//   x_s = k x_t - m eps + noise,
//   k = alpha_s / alpha_t,
//   m = (alpha_s / alpha_s') (alpha_s' sigma_t / alpha_t - sigma_s').
// Both are strictly positive because sigma/alpha increases with t.
struct TransitionCoeffs {
  int t = 0;
  int s_prime = 0;
  int s = 0;
  double k = 0.0;
  double m = 0.0;
};

// Transitions in sampling order: transitions[j] maps grid.steps[j] to
// grid.steps[j + 1].
struct SamplerCoeffs {
  std::vector<TransitionCoeffs> transitions;
};

SamplerCoeffs sampler_coeffs(const NoiseSchedule& schedule, const TimestepGrid& grid,
                             double eta);

// With dx = x_fp - x_q and dE = E^Q - E (network error at step j), paired
// runs obey dx_{j+1} = k_j dx_j + m_j dE_j. Starting from dx = 0 this unrolls
// to dx_0 = sum_j (prod_{i>j} k_i) m_j dE_j.
Eigen::VectorXd propagate_error(const SamplerCoeffs& coeffs,
                                std::span<const Eigen::VectorXd> delta_eps);

// sum_j (prod_{i>j} k_i) m_j * mean_norms[j]; an upper bound on E||dx_0||
// by the triangle inequality.
double expected_error_bound(const SamplerCoeffs& coeffs,
                            std::span<const double> mean_delta_eps_norms);

struct ErrorTrace {
  std::vector<Eigen::VectorXd> delta_eps;  // per step, E^Q - E
  std::vector<Eigen::VectorXd> delta_x;    // per step, after the step
  std::vector<double> recursion_residual;  // absolute, per step
  Eigen::VectorXd delta_x0;
  Eigen::VectorXd predicted_delta_x0;
  double closed_form_residual = 0.0;
};

// Paired trajectories must share the grid, seed, sub-timesteps, initial
// state and injected noise, and both must be plain strategic stochastic steps
// (tcd, or qsched at (1, 1)).
ErrorTrace measure_error(const Trajectory& fp, const Trajectory& q,
                         const SamplerCoeffs& coeffs);

struct ErrorReport {
  int samples = 0;
  std::vector<double> max_recursion_residual;      // per step
  std::vector<double> max_recursion_relative;      // per step
  std::vector<double> mean_delta_x_norm;           // per step
  std::vector<double> mean_delta_eps_norm;         // per step
  double max_closed_form_residual = 0.0;
  double max_closed_form_relative = 0.0;
  double mean_delta_x0_norm = 0.0;
  double expected_error_bound = 0.0;
};

ErrorReport summarize_errors(std::span<const Trajectory> fp,
                             std::span<const Trajectory> q,
                             const SamplerCoeffs& coeffs);

// Squared Frechet distance between Gaussians:
// |mu1 - mu2|^2 + tr(S1 + S2 - 2 (S1^{1/2} S2 S1^{1/2})^{1/2}).
double frechet_gaussians(const Eigen::VectorXd& mu1, const Eigen::MatrixXd& cov1,
                         const Eigen::VectorXd& mu2, const Eigen::MatrixXd& cov2);

// Moment-matched (unbiased covariance) squared Frechet distance between two
// sample sets; each needs at least dim + 1 rows.
double frechet_distance(const Batch& a, const Batch& b);

// Same against the mixture's exact mean and covariance.
double frechet_vs_gmm(const Batch& samples, const GaussianMixture& gmm);

struct MatchRecord {
  std::string player_a;
  std::string player_b;
  // A player name, or "draw".
  std::string winner;
};

// Sequential Elo updates R += K (S - E), E = 1 / (1 + 10^((R_opp - R) / 400)).
// Every player in `players` appears in the result even without records.
std::map<std::string, double> elo_ratings(std::span<const MatchRecord> records,
                                          double k_factor = 32.0,
                                          double initial = 1000.0,
                                          std::span<const std::string> players = {});

}  // namespace qsched

#endif  // QSCHED_ANALYSIS_HPP_
