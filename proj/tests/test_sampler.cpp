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
#include <random>

#include <gtest/gtest.h>

#include "qsched/error.hpp"
#include "qsched/gmm.hpp"
#include "qsched/sampler.hpp"
#include "test_support.hpp"

namespace qsched {
namespace {

using testing::default_schedule;

SamplerConfig base_config(int steps, double eta, std::uint64_t seed) {
  SamplerConfig c;
  c.grid = few_step_grid(default_schedule(), steps);
  c.eta = eta;
  c.seed = seed;
  return c;
}

TEST(SamplerKindTest, StringRoundTrip) {
  for (auto k : {SamplerKind::kTcd, SamplerKind::kQSched, SamplerKind::kPtqd, SamplerKind::kLcm,
                 SamplerKind::kQSchedLcm}) {
    EXPECT_EQ(sampler_kind_from_string(to_string(k)), k);
  }
  EXPECT_THROW(sampler_kind_from_string("ddpm"), Error);
}

TEST(TcdStepTest, MatchesScriptedRecomputation) {
  const NoiseSchedule& s = default_schedule();
  const GaussianMixture g = testing::two_component_2d();
  const GmmDenoiser den(g, s);
  for (double eta : {0.0, 0.3}) {
    const SamplerConfig cfg = base_config(3, eta, 21);
    const SampleResult res = sample_trajectory(cfg, den, s, 4, true);
    for (int i = 0; i < 4; ++i) {
      KeyedStream init(21, StreamPurpose::kInit, i);
      Eigen::VectorXd x(2);
      x[0] = init.normal();
      x[1] = init.normal();
      for (int j = 0; j < cfg.grid.n_steps(); ++j) {
        const int t = cfg.grid.steps[j];
        const int sn = cfg.grid.steps[j + 1];
        const int sp = static_cast<int>(std::floor((1.0 - eta) * sn + 1e-9));
        const Eigen::VectorXd eps = gmm_denoiser_eval(g, s, x, t).epsilon_hat;
        const double at = std::sqrt(s.alpha_bar(t)), st = std::sqrt(1.0 - s.alpha_bar(t));
        const double asp = std::sqrt(s.alpha_bar(sp)), ssp = std::sqrt(1.0 - s.alpha_bar(sp));
        const double as = std::sqrt(s.alpha_bar(sn));
        Eigen::VectorXd next = (as / asp) * (asp * (x - st * eps) / at + ssp * eps);
        const double var = 1.0 - s.alpha_bar(sn) / s.alpha_bar(sp);
        if (var > 0.0) {
          KeyedStream zs(21, StreamPurpose::kStepNoise, i, j);
          Eigen::VectorXd z(2);
          z[0] = zs.normal();
          z[1] = zs.normal();
          next += std::sqrt(var) * z;
        }
        x = next;
      }
      EXPECT_LT((res.samples.row(i).transpose() - x).norm(), 1e-12) << "eta " << eta;
    }
  }
}

TEST(TcdStepTest, RecordsStepsAndNoise) {
  const NoiseSchedule& s = default_schedule();
  const GmmDenoiser den(testing::two_component_2d(), s);
  const SampleResult det = sample_trajectory(base_config(4, 0.0, 3), den, s, 2, true);
  ASSERT_EQ(det.trajectories.size(), 2u);
  for (const auto& tr : det.trajectories) {
    ASSERT_EQ(tr.steps.size(), 4u);
    for (const auto& st : tr.steps) {
      EXPECT_EQ(st.s_prime, st.s);
      EXPECT_EQ(st.noise_std, 0.0);
      EXPECT_EQ(st.z.size(), 0);
    }
    EXPECT_EQ(tr.x0, tr.steps.back().x_after);
  }
  const SampleResult sto = sample_trajectory(base_config(4, 0.3, 3), den, s, 2, true);
  const auto& st = sto.trajectories[0].steps[0];
  EXPECT_EQ(st.s_prime, 524);
  EXPECT_NEAR(st.noise_std, eta_noise_std(s, 749, 524), 0.0);
  EXPECT_EQ(st.z.size(), 2);
  EXPECT_EQ(sto.trajectories[0].steps.back().noise_std, 0.0);
}

TEST(TcdStepTest, BatchSplitInvariance) {
  const NoiseSchedule& s = default_schedule();
  auto base = std::make_shared<GmmDenoiser>(testing::two_component_2d(), s);
  auto den = corrupt_denoiser(base, 0.05, {}, 0.1, 8);
  const SamplerConfig cfg = base_config(4, 0.3, 77);
  const Batch whole = sample_trajectory(cfg, *den, s, 10).samples;
  const Batch a = sample_trajectory(cfg, *den, s, 4, false, 0).samples;
  const Batch b = sample_trajectory(cfg, *den, s, 6, false, 4).samples;
  EXPECT_EQ(Batch(whole.topRows(4)), a);
  EXPECT_EQ(Batch(whole.bottomRows(6)), b);
}

TEST(IdentityReductionTest, QSchedAtOneIsTcd) {
  const NoiseSchedule& s = default_schedule();
  const GmmDenoiser den(testing::two_component_2d(), s);
  for (double eta : {0.0, 0.3, 0.7}) {
    SamplerConfig tcd = base_config(4, eta, 5);
    SamplerConfig qs = tcd;
    qs.kind = SamplerKind::kQSched;
    EXPECT_EQ(sample_trajectory(tcd, den, s, 8).samples, sample_trajectory(qs, den, s, 8).samples);
  }
}

TEST(IdentityReductionTest, PtqdAtZeroIsTcd) {
  const NoiseSchedule& s = default_schedule();
  const GmmDenoiser den(testing::two_component_2d(), s);
  for (double eta : {0.0, 0.3}) {
    SamplerConfig tcd = base_config(4, eta, 6);
    SamplerConfig p = tcd;
    p.kind = SamplerKind::kPtqd;
    p.ptqd = PtqdParams{0.0, Eigen::VectorXd::Zero(2), 0.0};
    EXPECT_EQ(sample_trajectory(tcd, den, s, 8).samples, sample_trajectory(p, den, s, 8).samples);
    p.ptqd = PtqdParams{0.0, {}, 0.0};
    EXPECT_EQ(sample_trajectory(tcd, den, s, 8).samples, sample_trajectory(p, den, s, 8).samples);
  }
}

TEST(IdentityReductionTest, QSchedLcmAtOneIsLcm) {
  const NoiseSchedule& s = default_schedule();
  const GmmDenoiser den(testing::two_component_2d(), s);
  SamplerConfig lcm = base_config(4, 0.0, 7);
  lcm.kind = SamplerKind::kLcm;
  SamplerConfig q = lcm;
  q.kind = SamplerKind::kQSchedLcm;
  EXPECT_EQ(sample_trajectory(lcm, den, s, 8).samples, sample_trajectory(q, den, s, 8).samples);
}

TEST(QSchedStepTest, CoefficientsScaleInputs) {
  const NoiseSchedule& s = default_schedule();
  Batch x(2, 2), e(2, 2);
  x << 0.3, -0.2, 1.0, 0.4;
  e << 0.1, 0.7, -0.5, 0.2;
  const PreconditionCoeffs c{1.05, 0.93};
  const Batch got = qsched_update(s, x, e, 749, 499, 499, c);
  const Batch want = tcd_update(s, 1.05 * x, 0.93 * e, 749, 499, 499);
  EXPECT_EQ(got, want);
  EXPECT_NE(got, tcd_update(s, x, e, 749, 499, 499));
}

TEST(QSchedStepTest, RejectsNonPositiveCoefficients) {
  EXPECT_THROW((PreconditionCoeffs{0.0, 1.0}.validate()), Error);
  EXPECT_THROW((PreconditionCoeffs{1.0, -1.0}.validate()), Error);
  EXPECT_THROW((PreconditionCoeffs{NAN, 1.0}.validate()), Error);
}

TEST(StepOrderingTest, RejectsBadTimesteps) {
  const NoiseSchedule& s = default_schedule();
  const GmmDenoiser den(testing::two_component_2d(), s);
  const Batch x = Batch::Zero(1, 2);
  const StepRng rng{0, 0, 0};
  for (auto [t, sn] : {std::pair{500, 500}, std::pair{400, 500}, std::pair{1000, 0},
                       std::pair{10, -1}}) {
    try {
      tcd_sss_step(x, t, sn, den, s, 0.0, rng);
      FAIL() << t << "->" << sn;
    } catch (const Error& e) {
      EXPECT_EQ(e.code(), ErrorCode::kOrdering);
    }
  }
  EXPECT_THROW(lcm_multistep_step(x, 5, 5, den, PreconditionFns{}, s, rng), Error);
}

TEST(StepOrderingTest, NonFiniteState) {
  const NoiseSchedule& s = default_schedule();
  const GmmDenoiser den(testing::two_component_2d(), s);
  Batch x = Batch::Zero(1, 2);
  x(0, 1) = NAN;
  try {
    tcd_sss_step(x, 999, 0, den, s, 0.0, StepRng{});
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kNonFinite);
  }
}

TEST(SamplerConfigTest, Validation) {
  SamplerConfig c = base_config(4, 0.0, 0);
  c.validate();
  c.kind = SamplerKind::kPtqd;
  EXPECT_THROW(c.validate(), Error);
  c.ptqd = PtqdParams{};
  c.validate();
  c.kind = SamplerKind::kTcd;
  EXPECT_THROW(c.validate(), Error);
  c = base_config(4, 1.0, 0);
  EXPECT_THROW(c.validate(), Error);
  c = base_config(4, 0.0, 0);
  c.grid.steps = {999, 500, 500, 0};
  EXPECT_THROW(c.validate(), Error);
  c.grid.steps = {999, 500};
  EXPECT_THROW(c.validate(), Error);
}

TEST(PtqdStepTest, ExactInversionOfPlantedCorruption) {
  const NoiseSchedule& s = default_schedule();
  auto fp = std::make_shared<GmmDenoiser>(testing::two_component_2d(), s);
  const Eigen::Vector2d mean(0.08, -0.03);
  auto q = corrupt_denoiser(fp, 0.12, mean, 0.0, 1);
  SamplerConfig tcd = base_config(4, 0.0, 9);
  SamplerConfig p = tcd;
  p.kind = SamplerKind::kPtqd;
  p.ptqd = PtqdParams{0.12, mean, 0.0};
  const Batch a = sample_trajectory(tcd, *fp, s, 16).samples;
  const Batch b = sample_trajectory(p, *q, s, 16).samples;
  EXPECT_LT((a - b).cwiseAbs().maxCoeff(), 1e-9);
  EXPECT_GT((a - sample_trajectory(tcd, *q, s, 16).samples).cwiseAbs().maxCoeff(), 1e-3);
}

TEST(PtqdStepTest, NoiseVarianceScheduleAndClamp) {
  const NoiseSchedule& s = default_schedule();
  const PtqdParams p{0.1, {}, 0.2};
  // eta = 0: s' = s, the remainder is negative and clamps to zero.
  EXPECT_EQ(ptqd_noise_std(s, 749, 499, 499, p), 0.0);
  const int sp = sub_timestep(499, 0.3);
  const double r = s.alpha_bar(499) / s.alpha_bar(sp);
  const double q = 0.2 * (s.sigma(sp) - s.alpha(sp) * s.sigma(749) / s.alpha(749)) / 1.1;
  const double want = 1.0 - r - r * q * q;
  if (want > 0.0) {
    EXPECT_NEAR(ptqd_noise_std(s, 749, 499, sp, p), std::sqrt(want), 1e-15);
  } else {
    EXPECT_EQ(ptqd_noise_std(s, 749, 499, sp, p), 0.0);
  }
  EXPECT_DOUBLE_EQ(ptqd_noise_std(s, 749, 499, sp, PtqdParams{0.3, {}, 0.0}),
                   eta_noise_std(s, 499, sp));
  EXPECT_LE(ptqd_noise_std(s, 749, 499, sp, p), eta_noise_std(s, 499, sp));
}

TEST(PtqdStepTest, CorrectionFormula) {
  Batch e(1, 2);
  e << 1.0, -2.0;
  const Batch got = ptqd_correct(e, PtqdParams{0.25, Eigen::Vector2d(0.5, 0.5), 0.0});
  EXPECT_DOUBLE_EQ(got(0, 0), 0.4);
  EXPECT_DOUBLE_EQ(got(0, 1), -2.0);
  EXPECT_THROW(ptqd_correct(e, PtqdParams{0.0, Eigen::Vector3d(0, 0, 0), 0.0}), Error);
}

TEST(LcmStepTest, FinalStepReturnsConsistencyOutput) {
  const NoiseSchedule& s = default_schedule();
  const GaussianMixture g = testing::two_component_2d();
  const GmmDenoiser den(g, s);
  const PreconditionFns pf;
  Batch x(1, 2);
  x << 0.4, -0.3;
  const StepOutput out = lcm_multistep_step(x, 249, 0, den, pf, s, StepRng{1, 3, 0});
  const DenoiserEval e = gmm_denoiser_eval(g, s, x.row(0).transpose(), 249);
  const Eigen::VectorXd want = consistency_wrap(e, pf, x.row(0).transpose(), 249);
  EXPECT_LT((out.x_s.row(0).transpose() - want).norm(), 1e-12);
  EXPECT_EQ(out.z.size(), 0);
}

TEST(LcmStepTest, IntermediateStepRenoises) {
  const NoiseSchedule& s = default_schedule();
  const GaussianMixture g = testing::two_component_2d();
  const GmmDenoiser den(g, s);
  const PreconditionFns pf;
  Batch x(1, 2);
  x << 0.4, -0.3;
  const StepRng rng{1, 2, 0};
  const StepOutput out = lcm_multistep_step(x, 749, 499, den, pf, s, rng);
  const DenoiserEval e = gmm_denoiser_eval(g, s, x.row(0).transpose(), 749);
  const Eigen::VectorXd f = consistency_wrap(e, pf, x.row(0).transpose(), 749);
  const Batch z = draw_step_noise(rng, 1, 2);
  const Eigen::VectorXd want = s.alpha(499) * f + s.sigma(499) * z.row(0).transpose();
  EXPECT_LT((out.x_s.row(0).transpose() - want).norm(), 1e-12);
  EXPECT_EQ(out.noise_std, s.sigma(499));
}

TEST(SampleTest, RejectsGridBeyondScheduleAndEmptyBatch) {
  const NoiseSchedule& s = default_schedule();
  const GmmDenoiser den(testing::two_component_2d(), s);
  SamplerConfig c = base_config(4, 0.0, 0);
  c.grid.steps = {999, 600, 300, 0};
  const NoiseSchedule small = build_schedule(0.0085, 0.012, 700);
  try {
    sample_trajectory(c, den, small, 2);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kValidation);
  }
  EXPECT_THROW(sample_trajectory(c, den, s, 0), Error);
}

}  // namespace
}  // namespace qsched
