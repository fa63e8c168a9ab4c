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

#include "qsched/schedule.hpp"

#include <cmath>
#include <cstdio>
#include <string>

#include "qsched/error.hpp"

namespace qsched {

NoiseSchedule build_schedule(double beta0, double betaN, int n_train) {
  if (!(beta0 > 0.0) || !(beta0 <= betaN) || !(betaN < 1.0)) {
    throw Error(ErrorCode::kValidation,
                "schedule requires 0 < beta0 <= betaN < 1, got beta0=" +
                    std::to_string(beta0) + " betaN=" + std::to_string(betaN));
  }
  if (n_train < 2) {
    throw Error(ErrorCode::kValidation, "schedule requires n_train >= 2");
  }

  NoiseSchedule sched;
  sched.n_train = n_train;
  sched.betas.resize(n_train);
  sched.alpha_bars.resize(n_train);
  sched.alphas.resize(n_train);
  sched.sigmas.resize(n_train);

  const double lo = std::sqrt(beta0);
  const double hi = std::sqrt(betaN);
  const double denom = static_cast<double>(n_train - 1);
  for (int t = 0; t < n_train; ++t) {
    const double root = lo + (static_cast<double>(t) / denom) * (hi - lo);
    sched.betas[t] = root * root;
  }
  // Pin the endpoints; sqrt/square round-trips can be off by an ulp.
  sched.betas.front() = beta0;
  sched.betas.back() = betaN;

  double prod = 1.0;
  for (int t = 0; t < n_train; ++t) {
    sched.alpha_bars[t] = prod;
    prod *= 1.0 - sched.betas[t];
  }
  for (int t = 0; t < n_train; ++t) {
    sched.alphas[t] = std::sqrt(sched.alpha_bars[t]);
    sched.sigmas[t] = std::sqrt(1.0 - sched.alpha_bars[t]);
  }
  return sched;
}

TimestepGrid few_step_grid(const NoiseSchedule& schedule, int n_steps) {
  const int n = schedule.n_train;
  if (n_steps < 1 || n_steps > n) {
    throw Error(ErrorCode::kValidation,
                "n_steps must be in [1, " + std::to_string(n) + "], got " +
                    std::to_string(n_steps));
  }
  TimestepGrid grid;
  grid.steps.reserve(n_steps + 1);
  for (int k = 0; k < n_steps; ++k) {
    const long long num = 2LL * n * (n_steps - k) + n_steps;
    const long long rounded = num / (2LL * n_steps);
    grid.steps.push_back(static_cast<int>(rounded) - 1);
  }
  if (grid.steps.back() != 0) grid.steps.push_back(0);
  return grid;
}

int sub_timestep(int s, double eta) {
  if (!(eta >= 0.0 && eta < 1.0)) {
    throw Error(ErrorCode::kValidation,
                "eta must lie in [0, 1), got " + std::to_string(eta));
  }
  if (s < 0) throw Error(ErrorCode::kValidation, "timestep must be >= 0");
  const int s_prime =
      static_cast<int>(std::floor((1.0 - eta) * static_cast<double>(s) + 1e-9));
  return s_prime > s ? s : s_prime;
}

double retention_ratio(const NoiseSchedule& schedule, int s, int s_prime) {
  if (s_prime > s) {
    throw Error(ErrorCode::kValidation,
                "sub-timestep s'=" + std::to_string(s_prime) +
                    " exceeds s=" + std::to_string(s));
  }
  return schedule.alpha_bar(s) / schedule.alpha_bar(s_prime);
}

double eta_noise_std(const NoiseSchedule& schedule, int s, int s_prime) {
  const double r = retention_ratio(schedule, s, s_prime);
  const double var = 1.0 - r;
  return var > 0.0 ? std::sqrt(var) : 0.0;
}

void write_schedule_csv(const NoiseSchedule& schedule, std::ostream& out) {
  out << "t,beta,alpha_bar,alpha,sigma\n";
  char buf[160];
  for (int t = 0; t < schedule.n_train; ++t) {
    std::snprintf(buf, sizeof(buf), "%d,%.17g,%.17g,%.17g,%.17g\n", t,
                  schedule.betas[t], schedule.alpha_bars[t], schedule.alphas[t],
                  schedule.sigmas[t]);
    out << buf;
  }
}

}  // namespace qsched
