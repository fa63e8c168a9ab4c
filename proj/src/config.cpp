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

#include "qsched/config.hpp"

#include <cstdio>
#include <fstream>
#include <set>

#include "qsched/error.hpp"

namespace qsched {
namespace {

using Json = nlohmann::json;

void check_keys(const Json& obj, const std::set<std::string>& allowed,
                const std::string& where) {
  if (!obj.is_object()) throw Error(ErrorCode::kSchema, where + " must be an object");
  for (const auto& [key, value] : obj.items()) {
    if (!allowed.count(key)) {
      throw Error(ErrorCode::kSchema, "unknown field '" + key + "' in " + where);
    }
  }
}

template <typename T>
void read(const Json& obj, const char* key, T& out) {
  if (obj.contains(key)) out = obj.at(key).get<T>();
}

ScorerSpec read_scorer(const Json& j, const std::string& where) {
  ScorerSpec s;
  check_keys(j, {"id", "command"}, where);
  read(j, "id", s.id);
  read(j, "command", s.command);
  return s;
}

Json scorer_json(const ScorerSpec& s) {
  Json j = {{"id", s.id}};
  if (!s.command.empty()) j["command"] = s.command;
  return j;
}

void read_range(const Json& obj, const char* key, double& lo, double& hi) {
  if (!obj.contains(key)) return;
  const auto v = obj.at(key).get<std::vector<double>>();
  if (v.size() != 2) {
    throw Error(ErrorCode::kSchema, std::string(key) + " must be [lo, hi]");
  }
  lo = v[0];
  hi = v[1];
}

std::optional<int> read_bits(const Json& obj, const char* key, std::optional<int> dflt) {
  if (!obj.contains(key)) return dflt;
  if (obj.at(key).is_null()) return std::nullopt;
  return obj.at(key).get<int>();
}

Json bits_json(const std::optional<int>& b) { return b ? Json(*b) : Json(nullptr); }

void parse_into(const Json& j, RunConfig& c) {
  check_keys(j, {"version", "seed", "output_dir", "schedule", "gmm", "denoiser", "quant",
                 "sampler", "calib"},
             "config");
  if (!j.contains("version")) throw Error(ErrorCode::kSchema, "config has no version");
  c.version = j.at("version").get<int>();
  if (c.version != kConfigVersion) {
    throw Error(ErrorCode::kSchema,
                "unsupported config version " + std::to_string(c.version));
  }
  read(j, "seed", c.seed);
  read(j, "output_dir", c.output_dir);

  if (j.contains("schedule")) {
    const Json& s = j.at("schedule");
    check_keys(s, {"beta0", "betaN", "n_train"}, "schedule");
    read(s, "beta0", c.schedule.beta0);
    read(s, "betaN", c.schedule.betaN);
    read(s, "n_train", c.schedule.n_train);
  }

  if (!j.contains("gmm")) throw Error(ErrorCode::kSchema, "config has no gmm section");
  {
    const Json& g = j.at("gmm");
    check_keys(g, {"weights", "means", "stds"}, "gmm");
    c.gmm.weights = g.at("weights").get<std::vector<double>>();
    c.gmm.stds = g.at("stds").get<std::vector<double>>();
    c.gmm.means.clear();
    for (const auto& m : g.at("means")) {
      const auto v = m.get<std::vector<double>>();
      c.gmm.means.push_back(Eigen::Map<const Eigen::VectorXd>(v.data(), v.size()));
    }
  }

  if (j.contains("denoiser")) {
    const Json& d = j.at("denoiser");
    check_keys(d, {"hidden", "activation", "time_features", "steps", "batch_size",
                   "learning_rate", "holdout", "max_heldout_loss"},
               "denoiser");
    read(d, "hidden", c.denoiser.hidden);
    if (d.contains("activation")) {
      c.denoiser.activation = activation_from_string(d.at("activation").get<std::string>());
    }
    read(d, "time_features", c.denoiser.time_features);
    read(d, "steps", c.denoiser.steps);
    read(d, "batch_size", c.denoiser.batch_size);
    read(d, "learning_rate", c.denoiser.learning_rate);
    read(d, "holdout", c.denoiser.holdout);
    if (d.contains("max_heldout_loss") && !d.at("max_heldout_loss").is_null()) {
      c.denoiser.max_heldout_loss = d.at("max_heldout_loss").get<double>();
    }
  }

  if (j.contains("quant")) {
    const Json& q = j.at("quant");
    check_keys(q, {"weight_bits", "act_bits", "calib_states"}, "quant");
    c.quant.bits.weight_bits = read_bits(q, "weight_bits", c.quant.bits.weight_bits);
    c.quant.bits.act_bits = read_bits(q, "act_bits", c.quant.bits.act_bits);
    read(q, "calib_states", c.quant.calib_states);
  }

  if (j.contains("sampler")) {
    const Json& s = j.at("sampler");
    check_keys(s, {"kind", "steps", "eta", "coeffs", "batch", "sigma_data",
                   "timestep_scaling", "record_trajectories"},
               "sampler");
    if (s.contains("kind")) c.sampler.kind = sampler_kind_from_string(s.at("kind").get<std::string>());
    read(s, "steps", c.sampler.steps);
    read(s, "eta", c.sampler.eta);
    read_range(s, "coeffs", c.sampler.coeffs.c_x, c.sampler.coeffs.c_eps);
    read(s, "batch", c.sampler.batch);
    read(s, "sigma_data", c.sampler.sigma_data);
    read(s, "timestep_scaling", c.sampler.timestep_scaling);
    read(s, "record_trajectories", c.sampler.record_trajectories);
  }

  if (j.contains("calib")) {
    const Json& k = j.at("calib");
    check_keys(k, {"cx_range", "ceps_range", "step", "k", "tc_scorer", "iq_scorer",
                   "contexts", "batch", "require_identity", "threads"},
               "calib");
    read_range(k, "cx_range", c.calib.cx_lo, c.calib.cx_hi);
    read_range(k, "ceps_range", c.calib.ceps_lo, c.calib.ceps_hi);
    read(k, "step", c.calib.step);
    read(k, "k", c.calib.k);
    if (k.contains("tc_scorer")) c.calib.tc_scorer = read_scorer(k.at("tc_scorer"), "calib.tc_scorer");
    if (k.contains("iq_scorer")) c.calib.iq_scorer = read_scorer(k.at("iq_scorer"), "calib.iq_scorer");
    read(k, "contexts", c.calib.contexts);
    read(k, "batch", c.calib.batch);
    read(k, "require_identity", c.calib.require_identity);
    read(k, "threads", c.calib.threads);
  }
  c.denoiser.seed = c.seed;
}

}  // namespace

RunConfig RunConfig::from_json(const nlohmann::json& j) {
  RunConfig c;
  try {
    parse_into(j, c);
  } catch (const Json::exception& e) {
    throw Error(ErrorCode::kSchema, std::string("config: ") + e.what());
  }
  c.validate();
  return c;
}

nlohmann::json RunConfig::to_json() const {
  Json means = Json::array();
  for (const auto& m : gmm.means) {
    means.push_back(std::vector<double>(m.data(), m.data() + m.size()));
  }
  Json den = {{"hidden", denoiser.hidden},
              {"activation", to_string(denoiser.activation)},
              {"time_features", denoiser.time_features},
              {"steps", denoiser.steps},
              {"batch_size", denoiser.batch_size},
              {"learning_rate", denoiser.learning_rate},
              {"holdout", denoiser.holdout},
              {"max_heldout_loss", denoiser.max_heldout_loss
                                       ? Json(*denoiser.max_heldout_loss)
                                       : Json(nullptr)}};
  return {
      {"version", version},
      {"seed", seed},
      {"output_dir", output_dir},
      {"schedule",
       {{"beta0", schedule.beta0}, {"betaN", schedule.betaN}, {"n_train", schedule.n_train}}},
      {"gmm", {{"weights", gmm.weights}, {"means", means}, {"stds", gmm.stds}}},
      {"denoiser", den},
      {"quant",
       {{"weight_bits", bits_json(quant.bits.weight_bits)},
        {"act_bits", bits_json(quant.bits.act_bits)},
        {"calib_states", quant.calib_states}}},
      {"sampler",
       {{"kind", to_string(sampler.kind)},
        {"steps", sampler.steps},
        {"eta", sampler.eta},
        {"coeffs", {sampler.coeffs.c_x, sampler.coeffs.c_eps}},
        {"batch", sampler.batch},
        {"sigma_data", sampler.sigma_data},
        {"timestep_scaling", sampler.timestep_scaling},
        {"record_trajectories", sampler.record_trajectories}}},
      {"calib",
       {{"cx_range", {calib.cx_lo, calib.cx_hi}},
        {"ceps_range", {calib.ceps_lo, calib.ceps_hi}},
        {"step", calib.step},
        {"k", calib.k},
        {"tc_scorer", scorer_json(calib.tc_scorer)},
        {"iq_scorer", scorer_json(calib.iq_scorer)},
        {"contexts", calib.contexts},
        {"batch", calib.batch},
        {"require_identity", calib.require_identity},
        {"threads", calib.threads}}},
  };
}

void RunConfig::validate() const {
  const NoiseSchedule sched = build_noise_schedule();
  gmm.validate();
  denoiser.validate();
  quant.bits.validate();
  if (quant.calib_states < 2) {
    throw Error(ErrorCode::kValidation, "quant.calib_states must be >= 2");
  }
  if (sampler.steps < 1 || sampler.steps > schedule.n_train) {
    throw Error(ErrorCode::kValidation, "sampler.steps must lie in [1, n_train]");
  }
  if (sampler.batch < 1) throw Error(ErrorCode::kValidation, "sampler.batch must be >= 1");
  SamplerConfig sc = sampler_config(sched);
  if (sc.kind == SamplerKind::kPtqd) sc.ptqd = PtqdParams{0.0, {}, 0.0};
  sc.validate();
  jaq_config().validate();
  if (calib.contexts < 1) throw Error(ErrorCode::kValidation, "calib.contexts must be >= 1");
  if (calib.batch < 1) throw Error(ErrorCode::kValidation, "calib.batch must be >= 1");
  if (calib.threads < 1) throw Error(ErrorCode::kValidation, "calib.threads must be >= 1");
  const CoeffGrid grid = coeff_grid();
  if (grid.require_identity) {
    bool has_identity = false;
    for (const auto& p : grid.points) has_identity |= p.is_identity();
    if (!has_identity) {
      throw Error(ErrorCode::kValidation, "calibration grid must contain (1, 1)");
    }
  }
}

NoiseSchedule RunConfig::build_noise_schedule() const {
  return build_schedule(schedule.beta0, schedule.betaN, schedule.n_train);
}

SamplerConfig RunConfig::sampler_config(const NoiseSchedule& sched) const {
  SamplerConfig sc;
  sc.kind = sampler.kind;
  sc.grid = few_step_grid(sched, sampler.steps);
  sc.eta = sampler.eta;
  sc.coeffs = sampler.coeffs;
  sc.precond.sigma_data = sampler.sigma_data;
  sc.precond.timestep_scaling = sampler.timestep_scaling;
  sc.seed = seed;
  return sc;
}

JaqConfig RunConfig::jaq_config() const { return {calib.k, calib.tc_scorer, calib.iq_scorer}; }

CoeffGrid RunConfig::coeff_grid() const {
  CoeffGrid g = CoeffGrid::range(calib.cx_lo, calib.cx_hi, calib.ceps_lo, calib.ceps_hi,
                                 calib.step);
  g.require_identity = calib.require_identity;
  return g;
}

RunConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::kMissingArtifact, "cannot open config " + path.string());
  Json j;
  try {
    in >> j;
  } catch (const Json::exception& e) {
    throw Error(ErrorCode::kSchema, path.string() + ": " + e.what());
  }
  return RunConfig::from_json(j);
}

std::uint64_t fnv1a64(std::string_view bytes) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

std::string config_hash(const RunConfig& cfg) {
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx",
                static_cast<unsigned long long>(fnv1a64(cfg.to_json().dump())));
  return buf;
}

}  // namespace qsched
