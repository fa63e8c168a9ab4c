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

#include <cmath>
#include <sstream>
#include <string>

#include <gtest/gtest.h>

#include "qsched/error.hpp"
#include "qsched/schedule.hpp"
#include "test_support.hpp"

namespace qsched {
namespace {

using testing::default_schedule;

TEST(ScheduleTest, EndpointsAreExact) {
  const NoiseSchedule& s = default_schedule();
  EXPECT_EQ(s.betas[0], 0.0085);
  EXPECT_EQ(s.betas[999], 0.012);
  EXPECT_EQ(s.n_train, 1000);
}

TEST(ScheduleTest, MidpointMatchesScaledLinear) {
  const NoiseSchedule s = build_schedule(0.0085, 0.012, 1001);
  const double mid = 0.5 * (std::sqrt(0.0085) + std::sqrt(0.012));
  EXPECT_NEAR(s.betas[500], mid * mid, 1e-17);
}

TEST(ScheduleTest, AlphaBarMatchesExtendedPrecisionProduct) {
  const NoiseSchedule& s = default_schedule();
  const long double lo = std::sqrt(0.0085L);
  const long double hi = std::sqrt(0.012L);
  for (int t : {0, 1, 10, 250, 999}) {
    long double prod = 1.0L;
    for (int i = 0; i < t; ++i) {
      const long double root = lo + (static_cast<long double>(i) / 999.0L) * (hi - lo);
      prod *= 1.0L - root * root;
    }
    EXPECT_NEAR(s.alpha_bar(t) / static_cast<double>(prod), 1.0, 1e-13) << "t=" << t;
  }
}

TEST(ScheduleTest, VariancePreservingAndMonotone) {
  for (auto [b0, bn, n] : {std::tuple{0.0085, 0.012, 1000}, std::tuple{0.00085, 0.012, 1000},
                           std::tuple{1e-4, 0.02, 50}, std::tuple{0.3, 0.3, 2}}) {
    const NoiseSchedule s = build_schedule(b0, bn, n);
    for (int t = 0; t < n; ++t) {
      EXPECT_NEAR(s.alpha(t) * s.alpha(t) + s.sigma(t) * s.sigma(t), 1.0, 1e-12);
      EXPECT_GT(s.betas[t], 0.0);
      EXPECT_LT(s.betas[t], 1.0);
      EXPECT_GT(s.alpha_bar(t), 0.0);
      EXPECT_LE(s.alpha_bar(t), 1.0);
      if (t > 0) {
        EXPECT_LT(s.alpha(t), s.alpha(t - 1));
        EXPECT_GT(s.sigma(t), s.sigma(t - 1));
      }
    }
    EXPECT_EQ(s.alpha(0), 1.0);
    EXPECT_EQ(s.sigma(0), 0.0);
  }
}

TEST(ScheduleTest, Deterministic) {
  const NoiseSchedule a = build_schedule(0.0085, 0.012, 1000);
  const NoiseSchedule b = build_schedule(0.0085, 0.012, 1000);
  EXPECT_EQ(a.betas, b.betas);
  EXPECT_EQ(a.alpha_bars, b.alpha_bars);
  EXPECT_EQ(a.alphas, b.alphas);
  EXPECT_EQ(a.sigmas, b.sigmas);
}

TEST(ScheduleTest, RejectsInvalidParameters) {
  EXPECT_THROW(build_schedule(0.0, 0.012, 1000), Error);
  EXPECT_THROW(build_schedule(0.02, 0.012, 1000), Error);
  EXPECT_THROW(build_schedule(0.0085, 1.0, 1000), Error);
  EXPECT_THROW(build_schedule(0.0085, 0.012, 1), Error);
  try {
    build_schedule(-1.0, 0.012, 1000);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kValidation);
  }
}

TEST(GridTest, SpecExamples) {
  const NoiseSchedule& s = default_schedule();
  EXPECT_EQ(few_step_grid(s, 1).steps, (std::vector<int>{999, 0}));
  EXPECT_EQ(few_step_grid(s, 4).steps, (std::vector<int>{999, 749, 499, 249, 0}));
  const TimestepGrid full = few_step_grid(s, 1000);
  ASSERT_EQ(full.steps.size(), 1000u);
  for (int i = 0; i < 1000; ++i) EXPECT_EQ(full.steps[i], 999 - i);
}

TEST(GridTest, MatchesRoundedLinspaceOracle) {
  for (int n : {2, 7, 50, 1000}) {
    const NoiseSchedule s = build_schedule(0.001, 0.02, n);
    for (int steps = 1; steps <= std::min(n, 40); ++steps) {
      const TimestepGrid g = few_step_grid(s, steps);
      std::vector<int> oracle;
      for (int k = 0; k < steps; ++k) {
        oracle.push_back(static_cast<int>(
                             std::floor(n * static_cast<double>(steps - k) / steps + 0.5)) -
                         1);
      }
      if (oracle.back() != 0) oracle.push_back(0);
      EXPECT_EQ(g.steps, oracle) << "n=" << n << " steps=" << steps;
      EXPECT_EQ(g.steps.front(), n - 1);
      EXPECT_EQ(g.steps.back(), 0);
      for (std::size_t i = 1; i < g.steps.size(); ++i) EXPECT_LT(g.steps[i], g.steps[i - 1]);
    }
  }
}

TEST(GridTest, RejectsOutOfRange) {
  EXPECT_THROW(few_step_grid(default_schedule(), 0), Error);
  EXPECT_THROW(few_step_grid(default_schedule(), 1001), Error);
}

TEST(SubTimestepTest, SpecExamples) {
  EXPECT_EQ(sub_timestep(500, 0.0), 500);
  EXPECT_EQ(sub_timestep(500, 0.3), 350);
  EXPECT_EQ(sub_timestep(0, 0.9), 0);
  EXPECT_EQ(sub_timestep(10, 0.9), 1);
}

TEST(SubTimestepTest, IdentityAtZeroEtaAndBounded) {
  for (int s = 0; s < 1000; ++s) {
    EXPECT_EQ(sub_timestep(s, 0.0), s);
    for (double eta : {0.1, 0.25, 0.5, 0.75, 0.99}) {
      const int sp = sub_timestep(s, eta);
      EXPECT_GE(sp, 0);
      EXPECT_LE(sp, s);
    }
  }
  EXPECT_THROW(sub_timestep(10, 1.0), Error);
  EXPECT_THROW(sub_timestep(10, -0.1), Error);
}

TEST(EtaNoiseTest, ZeroWhenNoSubstep) {
  const NoiseSchedule& s = default_schedule();
  for (int t : {0, 1, 500, 999}) EXPECT_EQ(eta_noise_std(s, t, t), 0.0);
}

TEST(EtaNoiseTest, DirectEvaluation) {
  const NoiseSchedule& s = default_schedule();
  const double v = eta_noise_std(s, 500, 350);
  EXPECT_GT(v, 0.0);
  EXPECT_NEAR(v, std::sqrt(1.0 - s.alpha_bar(500) / s.alpha_bar(350)), 1e-15);
  EXPECT_NEAR(eta_noise_std(s, 999, 0), std::sqrt(1.0 - s.alpha_bar(999)), 1e-15);
}

TEST(EtaNoiseTest, MonotoneInGap) {
  const NoiseSchedule& s = default_schedule();
  for (int t : {10, 249, 500, 999}) {
    double prev = 0.0;
    for (int sp = t; sp >= 0; --sp) {
      const double v = eta_noise_std(s, t, sp);
      EXPECT_GE(v, prev);
      EXPECT_LT(v, 1.0);
      prev = v;
    }
  }
  EXPECT_THROW(eta_noise_std(s, 100, 101), Error);
}

TEST(ScheduleTest, CsvDump) {
  const NoiseSchedule s = build_schedule(0.0085, 0.012, 3);
  std::ostringstream out;
  write_schedule_csv(s, out);
  std::istringstream in(out.str());
  std::string line;
  std::getline(in, line);
  EXPECT_EQ(line, "t,beta,alpha_bar,alpha,sigma");
  int rows = 0;
  while (std::getline(in, line)) ++rows;
  EXPECT_EQ(rows, 3);
  EXPECT_NE(out.str().find("\n0,0.0085"), std::string::npos);
}

}  // namespace
}  // namespace qsched
