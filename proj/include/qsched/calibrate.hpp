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

#ifndef QSCHED_CALIBRATE_HPP_
#define QSCHED_CALIBRATE_HPP_

#include <cstdint>
#include <filesystem>
#include <string>
#include <utility>
#include <vector>

#include "json.hpp"
#include "qsched/denoiser.hpp"
#include "qsched/gmm.hpp"
#include "qsched/sampler.hpp"
#include "qsched/schedule.hpp"

namespace qsched {

// Mean log-density of the samples under the mixture.
double tc_gmm_loglik(const Batch& samples, const GaussianMixture& gmm);

// -mean_i min_c |x_i - mu_c|^2 / d. Zero iff every sample sits on a mode.
double iq_mode_sharpness(const Batch& samples, const GaussianMixture& gmm);

// A calibration context plays the role of a prompt: it fixes the noise
// streams used to draw one calibration batch.
struct CalibContext {
  int id = 0;
  std::uint64_t seed = 0;
};

std::vector<CalibContext> make_contexts(std::uint64_t global_seed, int count);

struct ScorerSpec {
  // "gmm_loglik", "mode_sharpness" or "external".
  std::string id = "gmm_loglik";
  // Shell command for "external" scorers.
  std::string command;
};

struct JaqConfig {
  double k = 2.0;
  ScorerSpec tc{"gmm_loglik", ""};
  ScorerSpec iq{"mode_sharpness", ""};

  void validate() const;
};

struct ScoreTriple {
  double tc = 0.0;
  double iq = 0.0;
  double jaq = 0.0;
};

// Runs `command <samples_csv> <context_json>`. The context JSON declares
// "output_path", where the scorer must write {"tc": number, "iq": number}.
std::pair<double, double> external_scorer(const std::filesystem::path& samples_path,
                                          const std::filesystem::path& context_path,
                                          const std::string& command);

// Writes samples as CSV with header x0..x{d-1}, 17 significant digits.
void write_samples_csv(const Batch& samples, const std::filesystem::path& path);
Batch read_samples_csv(const std::filesystem::path& path);

// Resolves the configured scorers and combines them as tc + k * iq.
class JaqEvaluator {
 public:
  JaqEvaluator(JaqConfig cfg, GaussianMixture gmm,
               std::filesystem::path work_dir = std::filesystem::temp_directory_path());

  ScoreTriple score(const Batch& samples, const CalibContext& context) const;
  const JaqConfig& config() const { return cfg_; }

 private:
  JaqConfig cfg_;
  GaussianMixture gmm_;
  std::filesystem::path work_dir_;
};

ScoreTriple jaq_score(const Batch& samples, const CalibContext& context,
                      const JaqEvaluator& evaluator);

struct CoeffGrid {
  std::vector<PreconditionCoeffs> points;
  // When false, the grid may omit (1, 1).
  bool require_identity = true;

  // Inclusive ranges with a shared step; values are snapped to 1e-9 so that
  // 1.0 is hit exactly when it lies on the lattice.
  static CoeffGrid range(double cx_lo, double cx_hi, double ce_lo, double ce_hi,
                         double step);
};

struct SurfaceEntry {
  PreconditionCoeffs coeffs;
  ScoreTriple score;
};

struct CalibrationResult {
  PreconditionCoeffs best_coeffs;
  ScoreTriple best_score;
  std::vector<SurfaceEntry> surface;  // in grid order
  std::vector<CalibContext> contexts;
  int batch = 0;
  std::uint64_t seed = 0;

  nlohmann::json to_json() const;
};

// Evaluates every grid point with the same contexts and noise streams, so
// the surface differs only through the coefficients. Maximizes JAQ; ties go
// to the point nearest (1, 1), then lexicographically smallest (c_x, c_eps).
CalibrationResult grid_search(const CoeffGrid& grid, const SamplerConfig& base,
                              const Denoiser& denoiser, const NoiseSchedule& schedule,
                              const JaqEvaluator& jaq,
                              const std::vector<CalibContext>& contexts, int batch,
                              std::uint64_t seed = 0, int threads = 1);

}  // namespace qsched

#endif  // QSCHED_CALIBRATE_HPP_
