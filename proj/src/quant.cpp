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

#include "qsched/quant.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "qsched/error.hpp"
#include "qsched/rng.hpp"

namespace qsched {
namespace {

int qmax(int bits) { return (1 << (bits - 1)) - 1; }

void check_bits(int bits) {
  if (bits < 2 || bits > 30) {
    throw Error(ErrorCode::kValidation,
                "quantizer needs 2 <= bits <= 30, got " + std::to_string(bits));
  }
}

double max_abs(std::span<const double> values) {
  double m = 0.0;
  for (double v : values) {
    if (!std::isfinite(v)) {
      throw Error(ErrorCode::kNonFinite, "cannot quantize non-finite values");
    }
    m = std::max(m, std::abs(v));
  }
  return m;
}

// Per-tensor evaluation of every calibration state, one forward pass each.
Batch predict_all(const Denoiser& net, std::span<const CalibState> states) {
  Batch out(static_cast<Eigen::Index>(states.size()), net.dim());
  for (std::size_t i = 0; i < states.size(); ++i) {
    out.row(static_cast<Eigen::Index>(i)) =
        net.predict_noise(states[i].x.transpose(), states[i].t, i);
  }
  return out;
}

}  // namespace

void QuantConfig::validate() const {
  if (weight_bits && (*weight_bits < 2 || *weight_bits > 8)) {
    throw Error(ErrorCode::kValidation, "weight_bits must be in [2, 8]");
  }
  if (act_bits && (*act_bits < 4 || *act_bits > 16)) {
    throw Error(ErrorCode::kValidation, "act_bits must be in [4, 16]");
  }
}

double quant_step(std::span<const double> values, int bits) {
  check_bits(bits);
  const double m = max_abs(values);
  return m > 0.0 ? m / qmax(bits) : 1.0;
}

double fake_quantize(double v, double step, int bits) {
  const double hi = qmax(bits);
  const double lo = -hi - 1.0;
  const double q = std::clamp(std::nearbyint(v / step), lo, hi);
  return q * step;
}

std::vector<double> quantize_tensor(std::span<const double> values, int bits) {
  const double step = quant_step(values, bits);
  std::vector<double> out(values.size());
  std::transform(values.begin(), values.end(), out.begin(),
                 [&](double v) { return fake_quantize(v, step, bits); });
  return out;
}

void quantize_in_place(Eigen::Ref<Eigen::MatrixXd> values, int bits) {
  const double step =
      quant_step(std::span<const double>(values.data(), values.size()), bits);
  values = values.unaryExpr([&](double v) { return fake_quantize(v, step, bits); });
}

std::vector<CalibState> draw_calibration_states(const GaussianMixture& gmm,
                                                const NoiseSchedule& schedule,
                                                int count, std::uint64_t seed) {
  std::vector<CalibState> states;
  states.reserve(count);
  for (int i = 0; i < count; ++i) {
    KeyedStream rng(seed, StreamPurpose::kCalibStates, static_cast<std::uint64_t>(i));
    const Eigen::VectorXd x0 = gmm.sample(rng);
    CalibState s;
    s.t = rng.uniform_int(1, schedule.n_train - 1);
    s.x.resize(gmm.dim());
    for (int j = 0; j < gmm.dim(); ++j) {
      s.x[j] = schedule.alpha(s.t) * x0[j] + schedule.sigma(s.t) * rng.normal();
    }
    states.push_back(std::move(s));
  }
  return states;
}

QuantizedMlpDenoiser::QuantizedMlpDenoiser(MlpDenoiser net, QuantConfig cfg,
                                           std::vector<double> act_ranges)
    : net_(std::move(net)), cfg_(cfg), act_ranges_(std::move(act_ranges)) {
  cfg_.validate();
  if (cfg_.act_bits && act_ranges_.size() != net_.spec().hidden.size()) {
    throw Error(ErrorCode::kMissingCalibration,
                "activation quantization needs one calibrated range per hidden layer");
  }
  if (cfg_.weight_bits) {
    // Biases stay in full precision, as with int32 bias accumulators.
    for (auto& layer : net_.mutable_layers()) {
      quantize_in_place(layer.weight, *cfg_.weight_bits);
    }
  }
}

Batch QuantizedMlpDenoiser::predict_noise(const Batch& x_t, int t,
                                          std::uint64_t /*first_sample*/) const {
  if (!cfg_.act_bits) return net_.forward(x_t, t);
  const int bits = *cfg_.act_bits;
  return net_.forward(x_t, t, [&](int layer, Batch& a) {
    const double range = act_ranges_[layer];
    const double step = range > 0.0 ? range / qmax(bits) : 1.0;
    a = a.unaryExpr([&](double v) { return fake_quantize(v, step, bits); });
  });
}

QuantizedMlpDenoiser quantize_denoiser_with_ranges(const MlpDenoiser& net,
                                                   const QuantConfig& cfg,
                                                   std::vector<double> act_ranges) {
  return QuantizedMlpDenoiser(net, cfg, std::move(act_ranges));
}

QuantizedMlpDenoiser quantize_denoiser(const MlpDenoiser& net,
                                       const QuantConfig& cfg,
                                       std::span<const CalibState> calib_states) {
  cfg.validate();
  std::vector<double> ranges;
  if (cfg.act_bits) {
    if (calib_states.empty()) {
      throw Error(ErrorCode::kMissingCalibration,
                  "act_bits set but no calibration states were provided");
    }
    // Ranges are measured on the weight-quantized network.
    const QuantizedMlpDenoiser weights_only(net, QuantConfig{cfg.weight_bits, {}}, {});
    ranges.assign(net.spec().hidden.size(), 0.0);
    for (const auto& s : calib_states) {
      weights_only.network().forward(s.x.transpose(), s.t, [&](int layer, Batch& a) {
        ranges[layer] = std::max(ranges[layer], a.cwiseAbs().maxCoeff());
      });
    }
  }
  return QuantizedMlpDenoiser(net, cfg, std::move(ranges));
}

void PtqdParams::validate() const {
  if (!std::isfinite(gamma) || 1.0 + gamma == 0.0) {
    throw Error(ErrorCode::kSingularCorrection, "PTQD correction needs 1 + gamma != 0");
  }
  if (!(delta_std >= 0.0)) {
    throw Error(ErrorCode::kValidation, "PTQD delta_std must be >= 0");
  }
}

nlohmann::json PtqdParams::to_json() const {
  return {{"gamma", gamma},
          {"delta_mean", std::vector<double>(delta_mean.data(),
                                             delta_mean.data() + delta_mean.size())},
          {"delta_std", delta_std}};
}

PtqdParams PtqdParams::from_json(const nlohmann::json& j) {
  PtqdParams p;
  try {
    p.gamma = j.at("gamma").get<double>();
    const auto mean = j.at("delta_mean").get<std::vector<double>>();
    p.delta_mean = Eigen::Map<const Eigen::VectorXd>(mean.data(),
                                                     static_cast<Eigen::Index>(mean.size()));
    p.delta_std = j.at("delta_std").get<double>();
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::kSchema, "invalid PTQD params: " + std::string(e.what()));
  }
  p.validate();
  return p;
}

PtqdParams estimate_ptqd_params(const Denoiser& fp, const Denoiser& q,
                                std::span<const CalibState> calib_states) {
  if (calib_states.size() < 2) {
    throw Error(ErrorCode::kDegenerateCalibration,
                "PTQD estimation needs at least 2 calibration states");
  }
  const Batch e = predict_all(fp, calib_states);
  const Batch eq = predict_all(q, calib_states);
  const double n = static_cast<double>(e.size());
  const double mean_e = e.sum() / n;
  const double mean_q = eq.sum() / n;
  const auto ce = e.array() - mean_e;
  const auto cq = eq.array() - mean_q;
  const double var_e = (ce * ce).sum() / n;
  if (!(var_e > 0.0)) {
    throw Error(ErrorCode::kDegenerateCalibration,
                "full-precision outputs have zero variance");
  }
  const double cov = (ce * cq).sum() / n;

  PtqdParams p;
  p.gamma = cov / var_e - 1.0;
  const Batch residual = eq - (1.0 + p.gamma) * e;
  p.delta_mean = residual.colwise().mean().transpose();
  const Batch centered = residual.rowwise() - p.delta_mean.transpose();
  p.delta_std = std::sqrt(centered.squaredNorm() / n);
  p.validate();
  return p;
}

double mean_abs_deviation(const Denoiser& fp, const Denoiser& q,
                          std::span<const CalibState> calib_states) {
  const Batch e = predict_all(fp, calib_states);
  const Batch eq = predict_all(q, calib_states);
  return (eq - e).cwiseAbs().sum() / static_cast<double>(e.size());
}

}  // namespace qsched
