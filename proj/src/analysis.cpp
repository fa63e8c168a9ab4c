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

#include "qsched/analysis.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "qsched/error.hpp"

namespace qsched {
namespace {

bool plain_sss(const Trajectory& tr) {
  return tr.kind == SamplerKind::kTcd ||
         (tr.kind == SamplerKind::kQSched && tr.coeffs.is_identity());
}

void require(bool ok, const std::string& what) {
  if (!ok) throw Error(ErrorCode::kComparability, "trajectories not comparable: " + what);
}

// Square root of a symmetric PSD matrix; eigenvalues down to -1e-10 (scaled
// by the spectrum) are treated as zero.
Eigen::MatrixXd psd_sqrt(const Eigen::MatrixXd& m) {
  const Eigen::MatrixXd sym = 0.5 * (m + m.transpose());
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(sym);
  Eigen::VectorXd ev = es.eigenvalues();
  const double scale = std::max(1.0, ev.cwiseAbs().maxCoeff());
  for (Eigen::Index i = 0; i < ev.size(); ++i) {
    if (ev[i] < -1e-10 * scale) {
      throw Error(ErrorCode::kValidation, "covariance is not positive semidefinite");
    }
    ev[i] = std::sqrt(std::max(ev[i], 0.0));
  }
  return es.eigenvectors() * ev.asDiagonal() * es.eigenvectors().transpose();
}

void moments(const Batch& x, Eigen::VectorXd& mu, Eigen::MatrixXd& cov) {
  if (x.rows() < x.cols() + 1) {
    throw Error(ErrorCode::kValidation,
                "Frechet distance needs at least dim + 1 samples per side");
  }
  mu = x.colwise().mean().transpose();
  const Eigen::MatrixXd centered = x.rowwise() - mu.transpose();
  cov = centered.transpose() * centered / static_cast<double>(x.rows() - 1);
}

}  // namespace

SamplerCoeffs sampler_coeffs(const NoiseSchedule& schedule, const TimestepGrid& grid,
                             double eta) {
  SamplerCoeffs out;
  for (int j = 0; j < grid.n_steps(); ++j) {
    TransitionCoeffs c;
    c.t = grid.steps[j];
    c.s = grid.steps[j + 1];
    c.s_prime = sub_timestep(c.s, eta);
    const double a_t = schedule.alpha(c.t);
    const double a_s = schedule.alpha(c.s);
    const double a_sp = schedule.alpha(c.s_prime);
    c.k = a_s / a_t;
    c.m = (a_s / a_sp) * (a_sp * schedule.sigma(c.t) / a_t - schedule.sigma(c.s_prime));
    out.transitions.push_back(c);
  }
  return out;
}

Eigen::VectorXd propagate_error(const SamplerCoeffs& coeffs,
                                std::span<const Eigen::VectorXd> delta_eps) {
  const auto n = coeffs.transitions.size();
  if (delta_eps.size() != n) {
    throw Error(ErrorCode::kValidation,
                "need one network-error vector per transition");
  }
  if (n == 0) return {};
  Eigen::VectorXd dx0 = Eigen::VectorXd::Zero(delta_eps[0].size());
  for (std::size_t j = 0; j < n; ++j) {
    double gain = coeffs.transitions[j].m;
    for (std::size_t i = j + 1; i < n; ++i) gain *= coeffs.transitions[i].k;
    dx0 += gain * delta_eps[j];
  }
  return dx0;
}

double expected_error_bound(const SamplerCoeffs& coeffs,
                            std::span<const double> mean_delta_eps_norms) {
  const auto n = coeffs.transitions.size();
  if (mean_delta_eps_norms.size() != n) {
    throw Error(ErrorCode::kValidation, "need one mean norm per transition");
  }
  double bound = 0.0;
  for (std::size_t j = 0; j < n; ++j) {
    double gain = coeffs.transitions[j].m;
    for (std::size_t i = j + 1; i < n; ++i) gain *= coeffs.transitions[i].k;
    bound += gain * mean_delta_eps_norms[j];
  }
  return bound;
}

ErrorTrace measure_error(const Trajectory& fp, const Trajectory& q,
                         const SamplerCoeffs& coeffs) {
  require(plain_sss(fp) && plain_sss(q),
          "both runs must use the unmodified strategic stochastic step");
  require(fp.seed == q.seed, "seeds differ");
  require(fp.eta == q.eta, "eta differs");
  require(fp.steps.size() == q.steps.size() &&
              fp.steps.size() == coeffs.transitions.size(),
          "step counts differ");
  require(!fp.steps.empty(), "empty trajectories");
  require(fp.steps[0].x_before == q.steps[0].x_before, "initial states differ");

  ErrorTrace trace;
  for (std::size_t j = 0; j < fp.steps.size(); ++j) {
    const StepRecord& a = fp.steps[j];
    const StepRecord& b = q.steps[j];
    const TransitionCoeffs& c = coeffs.transitions[j];
    require(a.t == b.t && a.s == b.s && a.s_prime == b.s_prime,
            "grids differ at step " + std::to_string(j));
    require(a.t == c.t && a.s == c.s && a.s_prime == c.s_prime,
            "coefficients do not match the grid at step " + std::to_string(j));
    require(a.noise_std == b.noise_std && a.z.size() == b.z.size() &&
                (a.z.size() == 0 || a.z == b.z),
            "injected noise differs at step " + std::to_string(j));

    const Eigen::VectorXd dx_before = a.x_before - b.x_before;
    const Eigen::VectorXd de = b.eps_hat - a.eps_hat;
    const Eigen::VectorXd dx_after = a.x_after - b.x_after;
    trace.recursion_residual.push_back(
        (dx_after - (c.k * dx_before + c.m * de)).norm());
    trace.delta_eps.push_back(de);
    trace.delta_x.push_back(dx_after);
  }
  trace.delta_x0 = fp.x0 - q.x0;
  trace.predicted_delta_x0 = propagate_error(coeffs, trace.delta_eps);
  trace.closed_form_residual = (trace.delta_x0 - trace.predicted_delta_x0).norm();
  return trace;
}

ErrorReport summarize_errors(std::span<const Trajectory> fp,
                             std::span<const Trajectory> q,
                             const SamplerCoeffs& coeffs) {
  if (fp.size() != q.size() || fp.empty()) {
    throw Error(ErrorCode::kComparability, "paired runs need equal, non-zero sizes");
  }
  const auto n_steps = coeffs.transitions.size();
  ErrorReport rep;
  rep.samples = static_cast<int>(fp.size());
  rep.max_recursion_residual.assign(n_steps, 0.0);
  rep.max_recursion_relative.assign(n_steps, 0.0);
  rep.mean_delta_x_norm.assign(n_steps, 0.0);
  rep.mean_delta_eps_norm.assign(n_steps, 0.0);
  auto relative = [](double res, double scale) {
    return res == 0.0 ? 0.0 : res / scale;
  };
  for (std::size_t i = 0; i < fp.size(); ++i) {
    require(fp[i].sample_index == q[i].sample_index, "sample indices differ");
    const ErrorTrace tr = measure_error(fp[i], q[i], coeffs);
    for (std::size_t j = 0; j < n_steps; ++j) {
      const double dx_norm = tr.delta_x[j].norm();
      rep.max_recursion_residual[j] =
          std::max(rep.max_recursion_residual[j], tr.recursion_residual[j]);
      rep.max_recursion_relative[j] = std::max(
          rep.max_recursion_relative[j], relative(tr.recursion_residual[j], dx_norm));
      rep.mean_delta_x_norm[j] += dx_norm;
      rep.mean_delta_eps_norm[j] += tr.delta_eps[j].norm();
    }
    rep.max_closed_form_residual =
        std::max(rep.max_closed_form_residual, tr.closed_form_residual);
    rep.max_closed_form_relative =
        std::max(rep.max_closed_form_relative,
                 relative(tr.closed_form_residual, tr.delta_x0.norm()));
    rep.mean_delta_x0_norm += tr.delta_x0.norm();
  }
  const double n = static_cast<double>(fp.size());
  for (std::size_t j = 0; j < n_steps; ++j) {
    rep.mean_delta_x_norm[j] /= n;
    rep.mean_delta_eps_norm[j] /= n;
  }
  rep.mean_delta_x0_norm /= n;
  rep.expected_error_bound = expected_error_bound(coeffs, rep.mean_delta_eps_norm);
  return rep;
}

double frechet_gaussians(const Eigen::VectorXd& mu1, const Eigen::MatrixXd& cov1,
                         const Eigen::VectorXd& mu2, const Eigen::MatrixXd& cov2) {
  if (mu1.size() != mu2.size() || cov1.rows() != mu1.size() ||
      cov2.rows() != mu2.size()) {
    throw Error(ErrorCode::kValidation, "Frechet distance dimension mismatch");
  }
  const Eigen::MatrixXd root1 = psd_sqrt(cov1);
  const Eigen::MatrixXd cross = psd_sqrt(root1 * cov2 * root1);
  const double fd2 = (mu1 - mu2).squaredNorm() + cov1.trace() + cov2.trace() -
                     2.0 * cross.trace();
  return std::max(fd2, 0.0);
}

double frechet_distance(const Batch& a, const Batch& b) {
  Eigen::VectorXd mu_a, mu_b;
  Eigen::MatrixXd cov_a, cov_b;
  moments(a, mu_a, cov_a);
  moments(b, mu_b, cov_b);
  return frechet_gaussians(mu_a, cov_a, mu_b, cov_b);
}

double frechet_vs_gmm(const Batch& samples, const GaussianMixture& gmm) {
  Eigen::VectorXd mu;
  Eigen::MatrixXd cov;
  moments(samples, mu, cov);
  return frechet_gaussians(mu, cov, gmm.mean(), gmm.covariance());
}

std::map<std::string, double> elo_ratings(std::span<const MatchRecord> records,
                                          double k_factor, double initial,
                                          std::span<const std::string> players) {
  if (!(k_factor > 0.0)) throw Error(ErrorCode::kValidation, "k_factor must be > 0");
  std::map<std::string, double> ratings;
  for (const auto& p : players) ratings.emplace(p, initial);
  for (const auto& rec : records) {
    if (rec.player_a == rec.player_b) {
      throw Error(ErrorCode::kValidation, "a player cannot play itself: " + rec.player_a);
    }
    double score_a;
    if (rec.winner == rec.player_a) {
      score_a = 1.0;
    } else if (rec.winner == rec.player_b) {
      score_a = 0.0;
    } else if (rec.winner == "draw") {
      score_a = 0.5;
    } else {
      throw Error(ErrorCode::kValidation,
                  "winner '" + rec.winner + "' is neither player nor 'draw'");
    }
    double& ra = ratings.try_emplace(rec.player_a, initial).first->second;
    double& rb = ratings.try_emplace(rec.player_b, initial).first->second;
    const double expected_a = 1.0 / (1.0 + std::pow(10.0, (rb - ra) / 400.0));
    const double delta = k_factor * (score_a - expected_a);
    ra += delta;
    rb -= delta;
  }
  return ratings;
}

}  // namespace qsched
