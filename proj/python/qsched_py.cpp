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

#include <pybind11/eigen.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <map>
#include <memory>
#include <tuple>
#include <optional>
#include <string>
#include <vector>

#include "qsched/analysis.hpp"
#include "qsched/config.hpp"
#include "qsched/error.hpp"
#include "qsched/gmm.hpp"
#include "qsched/quant.hpp"
#include "qsched/sampler.hpp"
#include "qsched/schedule.hpp"

namespace py = pybind11;
using namespace qsched;

namespace {

GaussianMixture make_gmm(const std::vector<double>& weights,
                         const std::vector<std::vector<double>>& means,
                         const std::vector<double>& stds) {
  GaussianMixture g;
  g.weights = weights;
  g.stds = stds;
  for (const auto& m : means) {
    g.means.push_back(Eigen::Map<const Eigen::VectorXd>(m.data(), m.size()));
  }
  g.validate();
  return g;
}

// Samples with the exact mixture denoiser, optionally through a planted
// linear corruption E^Q = (1 + gamma) E + delta.
Batch sample_gmm(const std::vector<double>& weights,
                 const std::vector<std::vector<double>>& means,
                 const std::vector<double>& stds, const std::string& kind, int steps,
                 double eta, std::pair<double, double> coeffs, int batch, std::uint64_t seed,
                 double gamma, std::optional<Eigen::VectorXd> delta_mean, double delta_std,
                 std::optional<std::tuple<double, std::vector<double>, double>> ptqd) {
  const NoiseSchedule sched = build_schedule(0.0085, 0.012, 1000);
  auto exact = std::make_shared<GmmDenoiser>(make_gmm(weights, means, stds), sched);
  std::shared_ptr<const Denoiser> den = exact;
  if (gamma != 0.0 || delta_mean || delta_std != 0.0) {
    den = corrupt_denoiser(exact, gamma, delta_mean.value_or(Eigen::VectorXd()), delta_std,
                           seed ^ 0x9e3779b97f4a7c15ULL);
  }
  SamplerConfig cfg;
  cfg.kind = sampler_kind_from_string(kind);
  cfg.grid = few_step_grid(sched, steps);
  cfg.eta = eta;
  cfg.coeffs = {coeffs.first, coeffs.second};
  cfg.seed = seed;
  if (ptqd) {
    const auto& [g, mean, sd] = *ptqd;
    cfg.ptqd = PtqdParams{g, Eigen::Map<const Eigen::VectorXd>(mean.data(), mean.size()), sd};
  }
  return sample_trajectory(cfg, *den, sched, batch).samples;
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "Quantization-aware few-step diffusion sampling";
  m.attr("__version__") = "0.1.0";

  py::register_exception<Error>(m, "QschedError", PyExc_RuntimeError);

  m.def(
      "schedule",
      [](double beta0, double betaN, int n_train) {
        const NoiseSchedule s = build_schedule(beta0, betaN, n_train);
        py::dict d;
        d["betas"] = s.betas;
        d["alpha_bars"] = s.alpha_bars;
        d["alphas"] = s.alphas;
        d["sigmas"] = s.sigmas;
        return d;
      },
      py::arg("beta0") = 0.0085, py::arg("betaN") = 0.012, py::arg("n_train") = 1000);

  m.def(
      "few_step_grid",
      [](int n_steps, int n_train) {
        return few_step_grid(build_schedule(0.0085, 0.012, n_train), n_steps).steps;
      },
      py::arg("n_steps"), py::arg("n_train") = 1000);

  m.def("sub_timestep", &sub_timestep, py::arg("s"), py::arg("eta"));

  m.def(
      "sampler_coeffs",
      [](int n_steps, double eta) {
        const NoiseSchedule s = build_schedule(0.0085, 0.012, 1000);
        std::vector<py::dict> out;
        for (const auto& tr : sampler_coeffs(s, few_step_grid(s, n_steps), eta).transitions) {
          py::dict d;
          d["t"] = tr.t;
          d["s_prime"] = tr.s_prime;
          d["s"] = tr.s;
          d["k"] = tr.k;
          d["m"] = tr.m;
          out.push_back(d);
        }
        return out;
      },
      py::arg("n_steps"), py::arg("eta") = 0.0);

  m.def("sample_gmm", &sample_gmm, py::arg("weights"), py::arg("means"), py::arg("stds"),
        py::arg("kind") = "tcd", py::arg("steps") = 4, py::arg("eta") = 0.0,
        py::arg("coeffs") = std::pair<double, double>{1.0, 1.0}, py::arg("batch") = 256,
        py::arg("seed") = 0, py::arg("gamma") = 0.0, py::arg("delta_mean") = py::none(),
        py::arg("delta_std") = 0.0, py::arg("ptqd") = py::none());

  m.def(
      "frechet_distance", [](const Batch& a, const Batch& b) { return frechet_distance(a, b); },
      py::arg("a"), py::arg("b"));

  m.def(
      "frechet_vs_gmm",
      [](const Batch& x, const std::vector<double>& w,
         const std::vector<std::vector<double>>& mu, const std::vector<double>& sd) {
        return frechet_vs_gmm(x, make_gmm(w, mu, sd));
      },
      py::arg("samples"), py::arg("weights"), py::arg("means"), py::arg("stds"));

  m.def(
      "quantize_tensor",
      [](const std::vector<double>& v, int bits) { return quantize_tensor(v, bits); },
      py::arg("values"), py::arg("bits"));
  m.def(
      "quant_step", [](const std::vector<double>& v, int bits) { return quant_step(v, bits); },
      py::arg("values"), py::arg("bits"));

  m.def(
      "elo_ratings",
      [](const std::vector<std::tuple<std::string, std::string, std::string>>& records,
         double k_factor, double initial) {
        std::vector<MatchRecord> recs;
        for (const auto& [a, b, w] : records) recs.push_back({a, b, w});
        return elo_ratings(recs, k_factor, initial);
      },
      py::arg("records"), py::arg("k_factor") = 32.0, py::arg("initial") = 1000.0);

  m.def(
      "config_hash",
      [](const std::string& path) { return config_hash(load_config(path)); }, py::arg("path"));
  m.def(
      "normalized_config",
      [](const std::string& path) { return load_config(path).to_json().dump(); },
      py::arg("path"));
}
