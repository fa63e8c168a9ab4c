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

#ifndef QSCHED_MLP_HPP_
#define QSCHED_MLP_HPP_

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "qsched/denoiser.hpp"
#include "qsched/gmm.hpp"
#include "qsched/schedule.hpp"

namespace qsched {

enum class Activation { kSiLU, kTanh };

std::string to_string(Activation act);
Activation activation_from_string(const std::string& name);

struct MlpSpec {
  int dim = 2;
  std::vector<int> hidden = {64, 64, 64};
  Activation activation = Activation::kSiLU;
  // Sinusoidal features of t / n_train; must be even (sin/cos pairs).
  int time_features = 8;
  int n_train = 1000;
  std::uint64_t seed = 0;

  int input_width() const { return dim + time_features; }
  void validate() const;
};

struct DenseLayer {
  Eigen::MatrixXd weight;  // out x in
  Eigen::VectorXd bias;
};

// Fully connected epsilon-predictor on [x_t, embed(t)].
class MlpDenoiser : public Denoiser {
 public:
  // Called on each hidden activation (post-nonlinearity) in place.
  using HiddenHook = std::function<void(int layer, Batch& activation)>;

  MlpDenoiser(MlpSpec spec, std::vector<DenseLayer> layers);

  // Xavier-uniform weights, zero biases, drawn from MlpSpec::seed.
  static MlpDenoiser initialize(const MlpSpec& spec);

  int dim() const override { return spec_.dim; }
  Batch predict_noise(const Batch& x_t, int t,
                      std::uint64_t first_sample) const override;

  Batch forward(const Batch& x_t, int t, const HiddenHook& hook = {}) const;
  Batch embed_inputs(const Batch& x_t, int t) const;

  const MlpSpec& spec() const { return spec_; }
  const std::vector<DenseLayer>& layers() const { return layers_; }
  std::vector<DenseLayer>& mutable_layers() { return layers_; }

  std::size_t parameter_count() const;
  std::vector<float> flat_parameters() const;

 private:
  MlpSpec spec_;
  std::vector<DenseLayer> layers_;
};

struct TrainingConfig {
  std::vector<int> hidden = {64, 64, 64};
  Activation activation = Activation::kSiLU;
  int time_features = 8;
  int steps = 4000;
  int batch_size = 256;
  double learning_rate = 2e-3;
  int holdout = 2048;
  std::uint64_t seed = 0;
  // When set, training fails unless the held-out loss ends below it.
  std::optional<double> max_heldout_loss;

  void validate() const;
};

struct TrainingReport {
  double initial_heldout_loss = 0.0;
  double final_heldout_loss = 0.0;
  double final_batch_loss = 0.0;
  int steps = 0;
};

struct TrainedDenoiser {
  MlpDenoiser net;
  TrainingReport report;
};

// Adam on the mean squared epsilon error; parameters end float32-exact so
// that saving and reloading reproduces the trained network bit for bit.
TrainedDenoiser train_mlp_denoiser(const GaussianMixture& gmm,
                                   const NoiseSchedule& schedule,
                                   const TrainingConfig& config);

// Mean squared epsilon error on a fixed set of noised states.
double heldout_loss(const Denoiser& net, const GaussianMixture& gmm,
                    const NoiseSchedule& schedule, int count, std::uint64_t seed);

// JSON header at `json_path`, little-endian float32 parameters in a sidecar
// named in the header's "params_file" (relative to the header).
void save_mlp(const MlpDenoiser& net, const std::filesystem::path& json_path);
MlpDenoiser load_mlp(const std::filesystem::path& json_path);

}  // namespace qsched

#endif  // QSCHED_MLP_HPP_
