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

#include "qsched/mlp.hpp"

#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <numbers>

#include "json.hpp"
#include "qsched/error.hpp"
#include "qsched/rng.hpp"

namespace qsched {
namespace {

using Json = nlohmann::json;

double sigmoid(double z) { return 1.0 / (1.0 + std::exp(-z)); }

void apply_activation(Activation act, Batch& z) {
  if (act == Activation::kSiLU) {
    z = z.unaryExpr([](double v) { return v * sigmoid(v); });
  } else {
    z = z.array().tanh().matrix();
  }
}

Batch activation_grad(Activation act, const Batch& z) {
  if (act == Activation::kSiLU) {
    return z.unaryExpr([](double v) {
      const double s = sigmoid(v);
      return s * (1.0 + v * (1.0 - s));
    });
  }
  return z.unaryExpr([](double v) {
    const double th = std::tanh(v);
    return 1.0 - th * th;
  });
}

void round_to_float(std::vector<DenseLayer>& layers) {
  auto fl = [](double v) { return static_cast<double>(static_cast<float>(v)); };
  for (auto& layer : layers) {
    layer.weight = layer.weight.unaryExpr(fl);
    layer.bias = layer.bias.unaryExpr(fl);
  }
}

Batch embed_rows(const MlpSpec& spec, const Batch& x_t,
                 const std::vector<int>& ts) {
  Batch in(x_t.rows(), spec.input_width());
  in.leftCols(spec.dim) = x_t;
  const int pairs = spec.time_features / 2;
  for (Eigen::Index r = 0; r < x_t.rows(); ++r) {
    const double tau = static_cast<double>(ts[r]) / spec.n_train;
    for (int j = 0; j < pairs; ++j) {
      const double freq = std::numbers::pi * std::ldexp(1.0, j);
      in(r, spec.dim + 2 * j) = std::sin(freq * tau);
      in(r, spec.dim + 2 * j + 1) = std::cos(freq * tau);
    }
  }
  return in;
}

// Forward pass keeping pre-activations (zs) and layer inputs (as) for
// backprop. Returns the network output.
Batch forward_cached(const MlpDenoiser& net, const Batch& input,
                     std::vector<Batch>& zs, std::vector<Batch>& as) {
  const auto& layers = net.layers();
  const auto n_layers = layers.size();
  zs.resize(n_layers);
  as.resize(n_layers);
  Batch a = input;
  for (std::size_t l = 0; l < n_layers; ++l) {
    as[l] = a;
    Batch z = a * layers[l].weight.transpose();
    z.rowwise() += layers[l].bias.transpose();
    zs[l] = z;
    if (l + 1 < n_layers) {
      apply_activation(net.spec().activation, z);
      a = std::move(z);
    } else {
      return z;
    }
  }
  return a;
}

struct NoisedBatch {
  Batch x_t;
  Batch eps;
  std::vector<int> ts;
};

NoisedBatch draw_noised(const GaussianMixture& gmm, const NoiseSchedule& schedule,
                        int count, KeyedStream& rng) {
  NoisedBatch b;
  b.x_t.resize(count, gmm.dim());
  b.eps.resize(count, gmm.dim());
  b.ts.resize(count);
  for (int i = 0; i < count; ++i) {
    const Eigen::VectorXd x0 = gmm.sample(rng);
    const int t = rng.uniform_int(1, schedule.n_train - 1);
    b.ts[i] = t;
    for (int j = 0; j < gmm.dim(); ++j) {
      const double e = rng.normal();
      b.eps(i, j) = e;
      b.x_t(i, j) = schedule.alpha(t) * x0[j] + schedule.sigma(t) * e;
    }
  }
  return b;
}

struct AdamSlot {
  Eigen::MatrixXd mw, vw;
  Eigen::VectorXd mb, vb;
};

}  // namespace

std::string to_string(Activation act) {
  return act == Activation::kSiLU ? "silu" : "tanh";
}

Activation activation_from_string(const std::string& name) {
  if (name == "silu") return Activation::kSiLU;
  if (name == "tanh") return Activation::kTanh;
  throw Error(ErrorCode::kValidation, "unknown activation '" + name + "'");
}

void MlpSpec::validate() const {
  if (dim < 1) throw Error(ErrorCode::kValidation, "MLP dim must be >= 1");
  if (time_features < 0 || time_features % 2 != 0) {
    throw Error(ErrorCode::kValidation, "time_features must be even and >= 0");
  }
  if (n_train < 2) throw Error(ErrorCode::kValidation, "MLP n_train must be >= 2");
  for (int w : hidden) {
    if (w < 1) throw Error(ErrorCode::kValidation, "hidden widths must be >= 1");
  }
}

MlpDenoiser::MlpDenoiser(MlpSpec spec, std::vector<DenseLayer> layers)
    : spec_(std::move(spec)), layers_(std::move(layers)) {
  spec_.validate();
  if (layers_.size() != spec_.hidden.size() + 1) {
    throw Error(ErrorCode::kValidation, "layer count does not match spec");
  }
  int in = spec_.input_width();
  for (std::size_t l = 0; l < layers_.size(); ++l) {
    const int out = l < spec_.hidden.size() ? spec_.hidden[l] : spec_.dim;
    const auto& layer = layers_[l];
    if (layer.weight.rows() != out || layer.weight.cols() != in ||
        layer.bias.size() != out) {
      throw Error(ErrorCode::kValidation,
                  "layer " + std::to_string(l) + " has inconsistent shape");
    }
    if (!layer.weight.allFinite() || !layer.bias.allFinite()) {
      throw Error(ErrorCode::kNonFinite,
                  "layer " + std::to_string(l) + " has non-finite parameters");
    }
    in = out;
  }
}

MlpDenoiser MlpDenoiser::initialize(const MlpSpec& spec) {
  spec.validate();
  KeyedStream rng(spec.seed, StreamPurpose::kParamInit, 0);
  std::vector<DenseLayer> layers;
  int in = spec.input_width();
  for (std::size_t l = 0; l <= spec.hidden.size(); ++l) {
    const int out = l < spec.hidden.size() ? spec.hidden[l] : spec.dim;
    const double limit = std::sqrt(6.0 / static_cast<double>(in + out));
    DenseLayer layer;
    layer.weight.resize(out, in);
    for (int r = 0; r < out; ++r) {
      for (int c = 0; c < in; ++c) {
        layer.weight(r, c) = limit * (2.0 * rng.uniform() - 1.0);
      }
    }
    layer.bias = Eigen::VectorXd::Zero(out);
    layers.push_back(std::move(layer));
    in = out;
  }
  round_to_float(layers);
  return MlpDenoiser(spec, std::move(layers));
}

Batch MlpDenoiser::embed_inputs(const Batch& x_t, int t) const {
  return embed_rows(spec_, x_t, std::vector<int>(x_t.rows(), t));
}

Batch MlpDenoiser::forward(const Batch& x_t, int t, const HiddenHook& hook) const {
  if (x_t.cols() != spec_.dim) {
    throw Error(ErrorCode::kValidation, "input dimension mismatch");
  }
  Batch a = embed_inputs(x_t, t);
  for (std::size_t l = 0; l < layers_.size(); ++l) {
    Batch z = a * layers_[l].weight.transpose();
    z.rowwise() += layers_[l].bias.transpose();
    if (l + 1 == layers_.size()) return z;
    apply_activation(spec_.activation, z);
    if (hook) hook(static_cast<int>(l), z);
    a = std::move(z);
  }
  return a;
}

Batch MlpDenoiser::predict_noise(const Batch& x_t, int t,
                                 std::uint64_t /*first_sample*/) const {
  return forward(x_t, t);
}

std::size_t MlpDenoiser::parameter_count() const {
  std::size_t n = 0;
  for (const auto& layer : layers_) {
    n += static_cast<std::size_t>(layer.weight.size() + layer.bias.size());
  }
  return n;
}

std::vector<float> MlpDenoiser::flat_parameters() const {
  std::vector<float> flat;
  flat.reserve(parameter_count());
  for (const auto& layer : layers_) {
    for (Eigen::Index r = 0; r < layer.weight.rows(); ++r) {
      for (Eigen::Index c = 0; c < layer.weight.cols(); ++c) {
        flat.push_back(static_cast<float>(layer.weight(r, c)));
      }
    }
    for (Eigen::Index r = 0; r < layer.bias.size(); ++r) {
      flat.push_back(static_cast<float>(layer.bias[r]));
    }
  }
  return flat;
}

void TrainingConfig::validate() const {
  if (steps < 0) throw Error(ErrorCode::kValidation, "training steps must be >= 0");
  if (batch_size < 1) throw Error(ErrorCode::kValidation, "batch_size must be >= 1");
  if (!(learning_rate > 0.0)) {
    throw Error(ErrorCode::kValidation, "learning_rate must be > 0");
  }
  if (holdout < 1) throw Error(ErrorCode::kValidation, "holdout must be >= 1");
}

double heldout_loss(const Denoiser& net, const GaussianMixture& gmm,
                    const NoiseSchedule& schedule, int count,
                    std::uint64_t seed) {
  KeyedStream rng(seed, StreamPurpose::kHoldout, 0);
  const NoisedBatch b = draw_noised(gmm, schedule, count, rng);
  double total = 0.0;
  for (int i = 0; i < count; ++i) {
    const Batch pred = net.predict_noise(b.x_t.row(i), b.ts[i], i);
    total += (pred - b.eps.row(i)).squaredNorm();
  }
  return total / (static_cast<double>(count) * gmm.dim());
}

TrainedDenoiser train_mlp_denoiser(const GaussianMixture& gmm,
                                   const NoiseSchedule& schedule,
                                   const TrainingConfig& config) {
  gmm.validate();
  config.validate();
  MlpSpec spec;
  spec.dim = gmm.dim();
  spec.hidden = config.hidden;
  spec.activation = config.activation;
  spec.time_features = config.time_features;
  spec.n_train = schedule.n_train;
  spec.seed = config.seed;
  MlpDenoiser net = MlpDenoiser::initialize(spec);

  TrainingReport report;
  report.steps = config.steps;
  report.initial_heldout_loss =
      heldout_loss(net, gmm, schedule, config.holdout, config.seed);

  auto& layers = net.mutable_layers();
  std::vector<AdamSlot> adam(layers.size());
  for (std::size_t l = 0; l < layers.size(); ++l) {
    adam[l].mw = Eigen::MatrixXd::Zero(layers[l].weight.rows(), layers[l].weight.cols());
    adam[l].vw = adam[l].mw;
    adam[l].mb = Eigen::VectorXd::Zero(layers[l].bias.size());
    adam[l].vb = adam[l].mb;
  }
  constexpr double kBeta1 = 0.9;
  constexpr double kBeta2 = 0.999;
  constexpr double kAdamEps = 1e-8;

  std::vector<Batch> zs;
  std::vector<Batch> as;
  const double scale = 2.0 / (static_cast<double>(config.batch_size) * spec.dim);
  for (int step = 0; step < config.steps; ++step) {
    KeyedStream rng(config.seed, StreamPurpose::kTrainBatch,
                    static_cast<std::uint64_t>(step));
    const NoisedBatch b = draw_noised(gmm, schedule, config.batch_size, rng);
    const Batch input = embed_rows(spec, b.x_t, b.ts);
    const Batch y = forward_cached(net, input, zs, as);
    const Batch diff = y - b.eps;
    const double loss = diff.squaredNorm() / (static_cast<double>(diff.size()));
    if (!std::isfinite(loss)) {
      throw Error(ErrorCode::kDivergence,
                  "non-finite training loss at step " + std::to_string(step));
    }
    report.final_batch_loss = loss;

    // Cosine decay to 10% of the base rate.
    const double progress = static_cast<double>(step) / config.steps;
    const double lr = config.learning_rate *
                      (0.1 + 0.45 * (1.0 + std::cos(std::numbers::pi * progress)));
    const double bc1 = 1.0 - std::pow(kBeta1, step + 1);
    const double bc2 = 1.0 - std::pow(kBeta2, step + 1);

    Batch grad = scale * diff;
    for (std::size_t li = layers.size(); li-- > 0;) {
      const Eigen::MatrixXd gw = grad.transpose() * as[li];
      const Eigen::VectorXd gb = grad.colwise().sum().transpose();
      if (li > 0) {
        Batch upstream = grad * layers[li].weight;
        grad = upstream.cwiseProduct(activation_grad(spec.activation, zs[li - 1]));
      }
      AdamSlot& s = adam[li];
      s.mw = kBeta1 * s.mw + (1.0 - kBeta1) * gw;
      s.vw = kBeta2 * s.vw + (1.0 - kBeta2) * gw.cwiseProduct(gw);
      s.mb = kBeta1 * s.mb + (1.0 - kBeta1) * gb;
      s.vb = kBeta2 * s.vb + (1.0 - kBeta2) * gb.cwiseProduct(gb);
      layers[li].weight.array() -=
          lr * (s.mw.array() / bc1) / ((s.vw.array() / bc2).sqrt() + kAdamEps);
      layers[li].bias.array() -=
          lr * (s.mb.array() / bc1) / ((s.vb.array() / bc2).sqrt() + kAdamEps);
    }
  }

  round_to_float(layers);
  MlpDenoiser trained(spec, layers);
  report.final_heldout_loss =
      heldout_loss(trained, gmm, schedule, config.holdout, config.seed);
  if (!std::isfinite(report.final_heldout_loss)) {
    throw Error(ErrorCode::kDivergence, "non-finite held-out loss after training");
  }
  if (config.max_heldout_loss && !(report.final_heldout_loss < *config.max_heldout_loss)) {
    throw Error(ErrorCode::kDivergence,
                "held-out loss " + std::to_string(report.final_heldout_loss) +
                    " did not reach threshold " +
                    std::to_string(*config.max_heldout_loss));
  }
  return TrainedDenoiser{std::move(trained), report};
}

void save_mlp(const MlpDenoiser& net, const std::filesystem::path& json_path) {
  const auto& spec = net.spec();
  std::filesystem::path params_path = json_path;
  params_path.replace_extension(".bin");

  Json header = {
      {"format", "qsched-mlp"},
      {"version", 1},
      {"dim", spec.dim},
      {"hidden", spec.hidden},
      {"activation", to_string(spec.activation)},
      {"time_features", spec.time_features},
      {"n_train", spec.n_train},
      {"seed", spec.seed},
      {"param_count", net.parameter_count()},
      {"params_file", params_path.filename().string()},
  };
  std::ofstream hout(json_path);
  if (!hout) throw Error(ErrorCode::kIo, "cannot write " + json_path.string());
  hout << header.dump(2) << "\n";

  std::ofstream pout(params_path, std::ios::binary);
  if (!pout) throw Error(ErrorCode::kIo, "cannot write " + params_path.string());
  for (float v : net.flat_parameters()) {
    std::uint32_t bits = std::bit_cast<std::uint32_t>(v);
    if constexpr (std::endian::native == std::endian::big) {
      bits = __builtin_bswap32(bits);
    }
    char bytes[4];
    std::memcpy(bytes, &bits, 4);
    pout.write(bytes, 4);
  }
}

MlpDenoiser load_mlp(const std::filesystem::path& json_path) {
  std::ifstream hin(json_path);
  if (!hin) {
    throw Error(ErrorCode::kMissingArtifact, "cannot open " + json_path.string());
  }
  Json header;
  try {
    hin >> header;
  } catch (const Json::exception& e) {
    throw Error(ErrorCode::kSchema, "malformed MLP header: " + std::string(e.what()));
  }
  MlpSpec spec;
  std::size_t count = 0;
  std::string params_file;
  try {
    if (header.at("format") != "qsched-mlp" || header.at("version") != 1) {
      throw Error(ErrorCode::kSchema, "unsupported MLP header format/version");
    }
    spec.dim = header.at("dim").get<int>();
    spec.hidden = header.at("hidden").get<std::vector<int>>();
    spec.activation = activation_from_string(header.at("activation").get<std::string>());
    spec.time_features = header.at("time_features").get<int>();
    spec.n_train = header.at("n_train").get<int>();
    spec.seed = header.at("seed").get<std::uint64_t>();
    count = header.at("param_count").get<std::size_t>();
    params_file = header.at("params_file").get<std::string>();
  } catch (const Json::exception& e) {
    throw Error(ErrorCode::kSchema, "invalid MLP header: " + std::string(e.what()));
  }
  spec.validate();

  const auto params_path = json_path.parent_path() / params_file;
  std::ifstream pin(params_path, std::ios::binary);
  if (!pin) {
    throw Error(ErrorCode::kMissingArtifact, "cannot open " + params_path.string());
  }
  std::vector<float> flat(count);
  for (std::size_t i = 0; i < count; ++i) {
    char bytes[4];
    if (!pin.read(bytes, 4)) {
      throw Error(ErrorCode::kSchema, "parameter block shorter than param_count");
    }
    std::uint32_t bits;
    std::memcpy(&bits, bytes, 4);
    if constexpr (std::endian::native == std::endian::big) {
      bits = __builtin_bswap32(bits);
    }
    flat[i] = std::bit_cast<float>(bits);
  }
  if (pin.peek() != std::char_traits<char>::eof()) {
    throw Error(ErrorCode::kSchema, "parameter block longer than param_count");
  }

  std::vector<DenseLayer> layers;
  std::size_t pos = 0;
  int in = spec.input_width();
  for (std::size_t l = 0; l <= spec.hidden.size(); ++l) {
    const int out = l < spec.hidden.size() ? spec.hidden[l] : spec.dim;
    DenseLayer layer;
    layer.weight.resize(out, in);
    layer.bias.resize(out);
    if (pos + static_cast<std::size_t>(out) * (in + 1) > count) {
      throw Error(ErrorCode::kSchema, "param_count does not match layer shapes");
    }
    for (int r = 0; r < out; ++r) {
      for (int c = 0; c < in; ++c) layer.weight(r, c) = flat[pos++];
    }
    for (int r = 0; r < out; ++r) layer.bias[r] = flat[pos++];
    layers.push_back(std::move(layer));
    in = out;
  }
  if (pos != count) {
    throw Error(ErrorCode::kSchema, "param_count does not match layer shapes");
  }
  return MlpDenoiser(spec, std::move(layers));
}

}  // namespace qsched
