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

#ifndef QSCHED_QUANT_HPP_
#define QSCHED_QUANT_HPP_

#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include <Eigen/Dense>

#include "json.hpp"
#include "qsched/denoiser.hpp"
#include "qsched/gmm.hpp"
#include "qsched/mlp.hpp"

namespace qsched {

// Symmetric per-tensor fake quantization. An unset bit width leaves that
// tensor kind in full precision.
struct QuantConfig {
  std::optional<int> weight_bits;
  std::optional<int> act_bits;

  void validate() const;
};

// Step size max|v| / (2^(bits-1) - 1); 1 for an all-zero tensor.
double quant_step(std::span<const double> values, int bits);

// q = clamp(round(v / step), -2^(bits-1), 2^(bits-1) - 1), returns q * step.
double fake_quantize(double v, double step, int bits);

std::vector<double> quantize_tensor(std::span<const double> values, int bits);
void quantize_in_place(Eigen::Ref<Eigen::MatrixXd> values, int bits);

// A noised state (x_t, t) used for activation-range and PTQD calibration.
struct CalibState {
  Eigen::VectorXd x;
  int t = 1;
};

// x_0 from the mixture, t uniform on [1, n_train - 1], x_t from the forward
// process; state i uses stream (seed, kCalibStates, i).
std::vector<CalibState> draw_calibration_states(const GaussianMixture& gmm,
                                                const NoiseSchedule& schedule,
                                                int count, std::uint64_t seed);

// MLP whose weights were fake-quantized once at construction and whose hidden
// activations are fake-quantized with fixed calibrated ranges.
class QuantizedMlpDenoiser final : public Denoiser {
 public:
  QuantizedMlpDenoiser(MlpDenoiser net, QuantConfig cfg,
                       std::vector<double> act_ranges);

  int dim() const override { return net_.dim(); }
  Batch predict_noise(const Batch& x_t, int t,
                      std::uint64_t first_sample) const override;

  const QuantConfig& config() const { return cfg_; }
  const std::vector<double>& activation_ranges() const { return act_ranges_; }
  const MlpDenoiser& network() const { return net_; }

 private:
  MlpDenoiser net_;
  QuantConfig cfg_;
  std::vector<double> act_ranges_;
};

// Running per-layer max |activation| of the full-precision network over the
// calibration states (after weight quantization).
QuantizedMlpDenoiser quantize_denoiser(const MlpDenoiser& net,
                                       const QuantConfig& cfg,
                                       std::span<const CalibState> calib_states);

// Rebuild from stored activation ranges (no recalibration).
QuantizedMlpDenoiser quantize_denoiser_with_ranges(const MlpDenoiser& net,
                                                   const QuantConfig& cfg,
                                                   std::vector<double> act_ranges);

// Linear quantization-error model E^Q = (1 + gamma) E + delta.
struct PtqdParams {
  double gamma = 0.0;
  Eigen::VectorXd delta_mean;
  double delta_std = 0.0;

  void validate() const;
  nlohmann::json to_json() const;
  static PtqdParams from_json(const nlohmann::json& j);
};

// gamma = cov(E^Q, E) / var(E) - 1 pooled over every output element; delta
// moments from the residual E^Q - (1 + gamma) E.
PtqdParams estimate_ptqd_params(const Denoiser& fp, const Denoiser& q,
                                std::span<const CalibState> calib_states);

// Mean |E^Q - E| over the states.
double mean_abs_deviation(const Denoiser& fp, const Denoiser& q,
                          std::span<const CalibState> calib_states);

}  // namespace qsched

#endif  // QSCHED_QUANT_HPP_
