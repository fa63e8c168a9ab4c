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

#include "qsched/gmm.hpp"

#include <cmath>
#include <limits>
#include <numbers>
#include <string>

#include "qsched/error.hpp"

namespace qsched {
namespace {

void require_finite(const Eigen::VectorXd& x) {
  if (!x.allFinite()) {
    throw Error(ErrorCode::kNonFinite, "non-finite input sample");
  }
}

// Normalized log-responsibilities of each component at x under noise level
// (alpha, sigma), plus the log normalizer (= log density).
double log_responsibilities(const GaussianMixture& gmm, const Eigen::VectorXd& x,
                            double alpha, double sigma,
                            std::vector<double>& log_r) {
  const int k = gmm.size();
  const double d = static_cast<double>(gmm.dim());
  log_r.assign(k, -std::numeric_limits<double>::infinity());
  double max_lr = -std::numeric_limits<double>::infinity();
  for (int i = 0; i < k; ++i) {
    if (gmm.weights[i] <= 0.0) continue;
    const double s = gmm.stds[i];
    const double var = alpha * alpha * s * s + sigma * sigma;
    const double sq = (x - alpha * gmm.means[i]).squaredNorm();
    log_r[i] = std::log(gmm.weights[i]) -
               0.5 * d * std::log(2.0 * std::numbers::pi * var) -
               0.5 * sq / var;
    if (log_r[i] > max_lr) max_lr = log_r[i];
  }
  double acc = 0.0;
  for (int i = 0; i < k; ++i) {
    if (std::isfinite(log_r[i])) acc += std::exp(log_r[i] - max_lr);
  }
  const double log_norm = max_lr + std::log(acc);
  for (double& v : log_r) v -= log_norm;
  return log_norm;
}

Eigen::VectorXd posterior_mean(const GaussianMixture& gmm,
                               const Eigen::VectorXd& x_t, double alpha,
                               double sigma) {
  std::vector<double> log_r;
  log_responsibilities(gmm, x_t, alpha, sigma, log_r);
  Eigen::VectorXd mean = Eigen::VectorXd::Zero(gmm.dim());
  for (int i = 0; i < gmm.size(); ++i) {
    if (!std::isfinite(log_r[i])) continue;
    const double s2 = gmm.stds[i] * gmm.stds[i];
    const double var = alpha * alpha * s2 + sigma * sigma;
    mean += std::exp(log_r[i]) *
            ((alpha * s2) * x_t + (sigma * sigma) * gmm.means[i]) / var;
  }
  return mean;
}

void check_timestep(const NoiseSchedule& schedule, int t) {
  if (t < 1 || t >= schedule.n_train) {
    throw Error(ErrorCode::kValidation,
                "GMM denoiser needs 1 <= t < n_train (sigma_t > 0), got t=" +
                    std::to_string(t));
  }
}

}  // namespace

void GaussianMixture::validate() const {
  if (weights.empty()) {
    throw Error(ErrorCode::kValidation, "mixture needs at least one component");
  }
  if (means.size() != weights.size() || stds.size() != weights.size()) {
    throw Error(ErrorCode::kValidation,
                "mixture weights/means/stds length mismatch");
  }
  const auto d = means[0].size();
  if (d == 0) throw Error(ErrorCode::kValidation, "mixture dimension is 0");
  double total = 0.0;
  for (std::size_t i = 0; i < weights.size(); ++i) {
    if (!(weights[i] >= 0.0) || !std::isfinite(weights[i])) {
      throw Error(ErrorCode::kValidation, "mixture weights must be >= 0");
    }
    if (!(stds[i] > 0.0) || !std::isfinite(stds[i])) {
      throw Error(ErrorCode::kValidation, "component stds must be > 0");
    }
    if (means[i].size() != d || !means[i].allFinite()) {
      throw Error(ErrorCode::kValidation,
                  "component means must be finite and share one dimension");
    }
    total += weights[i];
  }
  if (std::abs(total - 1.0) > 1e-12) {
    throw Error(ErrorCode::kValidation, "mixture weights must sum to 1");
  }
}

Eigen::VectorXd GaussianMixture::mean() const {
  Eigen::VectorXd m = Eigen::VectorXd::Zero(dim());
  for (int i = 0; i < size(); ++i) m += weights[i] * means[i];
  return m;
}

Eigen::MatrixXd GaussianMixture::covariance() const {
  const int d = dim();
  const Eigen::VectorXd m = mean();
  Eigen::MatrixXd cov = Eigen::MatrixXd::Zero(d, d);
  for (int i = 0; i < size(); ++i) {
    const Eigen::VectorXd diff = means[i] - m;
    cov += weights[i] * (diff * diff.transpose());
    cov.diagonal().array() += weights[i] * stds[i] * stds[i];
  }
  return cov;
}

double GaussianMixture::noised_log_density(const Eigen::VectorXd& x,
                                           double alpha, double sigma) const {
  std::vector<double> log_r;
  return log_responsibilities(*this, x, alpha, sigma, log_r);
}

Eigen::VectorXd GaussianMixture::sample(KeyedStream& rng) const {
  const double u = rng.uniform();
  int comp = size() - 1;
  double acc = 0.0;
  for (int i = 0; i < size(); ++i) {
    acc += weights[i];
    if (u < acc) {
      comp = i;
      break;
    }
  }
  Eigen::VectorXd x(dim());
  for (int j = 0; j < dim(); ++j) x[j] = means[comp][j] + stds[comp] * rng.normal();
  return x;
}

DenoiserEval gmm_denoiser_eval(const GaussianMixture& gmm,
                               const NoiseSchedule& schedule,
                               const Eigen::VectorXd& x_t, int t) {
  check_timestep(schedule, t);
  require_finite(x_t);
  const double alpha = schedule.alpha(t);
  const double sigma = schedule.sigma(t);
  DenoiserEval eval;
  eval.x0_hat = posterior_mean(gmm, x_t, alpha, sigma);
  eval.epsilon_hat = (x_t - alpha * eval.x0_hat) / sigma;
  return eval;
}

Eigen::VectorXd gmm_score(const GaussianMixture& gmm,
                          const NoiseSchedule& schedule,
                          const Eigen::VectorXd& x_t, int t) {
  check_timestep(schedule, t);
  require_finite(x_t);
  const double alpha = schedule.alpha(t);
  const double sigma = schedule.sigma(t);
  const Eigen::VectorXd x0 = posterior_mean(gmm, x_t, alpha, sigma);
  return (alpha * x0 - x_t) / (sigma * sigma);
}

GmmDenoiser::GmmDenoiser(GaussianMixture gmm, NoiseSchedule schedule)
    : gmm_(std::move(gmm)), schedule_(std::move(schedule)) {
  gmm_.validate();
}

Batch GmmDenoiser::predict_noise(const Batch& x_t, int t,
                                 std::uint64_t /*first_sample*/) const {
  Batch out(x_t.rows(), x_t.cols());
  for (Eigen::Index r = 0; r < x_t.rows(); ++r) {
    const Eigen::VectorXd x = x_t.row(r).transpose();
    out.row(r) = gmm_denoiser_eval(gmm_, schedule_, x, t).epsilon_hat.transpose();
  }
  return out;
}

Batch sample_mixture(const GaussianMixture& gmm, int count, std::uint64_t seed) {
  Batch out(count, gmm.dim());
  for (int i = 0; i < count; ++i) {
    KeyedStream rng(seed, StreamPurpose::kData, static_cast<std::uint64_t>(i));
    out.row(i) = gmm.sample(rng).transpose();
  }
  return out;
}

}  // namespace qsched
