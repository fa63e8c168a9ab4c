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

#include "commands.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <iterator>
#include <map>
#include <sstream>

#include <spdlog/spdlog.h>

#include "qsched/analysis.hpp"
#include "qsched/calibrate.hpp"
#include "qsched/error.hpp"
#include "qsched/gmm.hpp"
#include "qsched/mlp.hpp"

namespace qsched::cli {
namespace {

using Json = nlohmann::json;

std::string hex64(std::uint64_t v) {
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

std::string file_hash(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::kMissingArtifact, "cannot open " + path.string());
  const std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return hex64(fnv1a64(bytes));
}

std::string relative_ref(const fs::path& target, const fs::path& base_dir) {
  return fs::weakly_canonical(target)
      .lexically_relative(fs::weakly_canonical(base_dir))
      .generic_string();
}

std::vector<double> to_vec(const Eigen::VectorXd& v) {
  return {v.data(), v.data() + v.size()};
}

Eigen::VectorXd from_json_vec(const Json& j) {
  const auto v = j.get<std::vector<double>>();
  return Eigen::Map<const Eigen::VectorXd>(v.data(), static_cast<Eigen::Index>(v.size()));
}

void require_artifact(const fs::path& path) {
  if (!fs::exists(path)) {
    throw Error(ErrorCode::kMissingArtifact, "missing artifact " + path.string());
  }
}

void check_compatible(const RunConfig& cfg, const Denoiser& d) {
  if (d.dim() != cfg.gmm.dim()) {
    throw Error(ErrorCode::kValidation,
                "denoiser dimension " + std::to_string(d.dim()) +
                    " does not match the mixture dimension " +
                    std::to_string(cfg.gmm.dim()));
  }
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorCode::kIo, "cannot write " + path.string());
  out << text;
}

}  // namespace

void apply_overrides(RunConfig& cfg, const Overrides& o) {
  if (o.seed) {
    cfg.seed = *o.seed;
    cfg.denoiser.seed = *o.seed;
  }
  if (o.coeffs) cfg.sampler.coeffs = *o.coeffs;
  if (o.eta) cfg.sampler.eta = *o.eta;
  if (o.steps) cfg.sampler.steps = *o.steps;
  if (o.sampler) cfg.sampler.kind = *o.sampler;
  if (o.k_factor) cfg.calib.k = *o.k_factor;
  cfg.validate();
}

PreconditionCoeffs parse_coeffs(const std::string& text) {
  const auto comma = text.find(',');
  if (comma == std::string::npos) {
    throw Error(ErrorCode::kValidation, "--coeffs expects CX,CE, got '" + text + "'");
  }
  PreconditionCoeffs c;
  try {
    std::size_t used = 0;
    const std::string a = text.substr(0, comma);
    const std::string b = text.substr(comma + 1);
    c.c_x = std::stod(a, &used);
    if (used != a.size()) throw std::invalid_argument(a);
    c.c_eps = std::stod(b, &used);
    if (used != b.size()) throw std::invalid_argument(b);
  } catch (const std::logic_error&) {
    throw Error(ErrorCode::kValidation, "--coeffs expects CX,CE, got '" + text + "'");
  }
  c.validate();
  return c;
}

void write_json(const fs::path& path, const nlohmann::json& j) {
  write_text(path, j.dump(2) + "\n");
}

nlohmann::json read_json(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::kMissingArtifact, "cannot open " + path.string());
  try {
    Json j;
    in >> j;
    return j;
  } catch (const Json::exception& e) {
    throw Error(ErrorCode::kSchema, path.string() + ": " + e.what());
  }
}

void write_manifest(const fs::path& file, const std::string& config_hash,
                    std::optional<std::uint64_t> seed,
                    const std::vector<fs::path>& inputs) {
  Json in = Json::array();
  for (const auto& p : inputs) {
    in.push_back({{"file", p.filename().string()}, {"content_fnv1a", file_hash(p)}});
  }
  Json m = {{"file", file.filename().string()},
            {"tool", "qsched"},
            {"tool_version", kToolVersion},
            {"config_hash", config_hash},
            {"seed", seed ? Json(*seed) : Json(nullptr)},
            {"content_fnv1a", file_hash(file)},
            {"inputs", in}};
  write_json(file.string() + ".manifest.json", m);
}

LoadedDenoiser load_denoiser(const fs::path& path) {
  const Json header = read_json(path);
  const std::string format = header.value("format", "");
  LoadedDenoiser out;
  if (format == "qsched-mlp") {
    out.denoiser = std::make_shared<MlpDenoiser>(load_mlp(path));
    return out;
  }
  if (format != "qsched-quantized-mlp") {
    throw Error(ErrorCode::kSchema, path.string() + " is not a denoiser artifact");
  }
  try {
    const fs::path base = path.parent_path() / header.at("base_model").get<std::string>();
    require_artifact(base);
    if (file_hash(base) != header.at("base_model_fnv1a").get<std::string>()) {
      throw Error(ErrorCode::kSchema,
                  "base model " + base.string() + " changed since quantization");
    }
    QuantConfig qc;
    if (!header.at("weight_bits").is_null()) qc.weight_bits = header.at("weight_bits").get<int>();
    if (!header.at("act_bits").is_null()) qc.act_bits = header.at("act_bits").get<int>();
    auto ranges = header.at("activation_ranges").get<std::vector<double>>();
    out.denoiser = std::make_shared<QuantizedMlpDenoiser>(
        quantize_denoiser_with_ranges(load_mlp(base), qc, std::move(ranges)));
    out.ptqd = PtqdParams::from_json(header.at("ptqd"));
    out.quantized = true;
  } catch (const Json::exception& e) {
    throw Error(ErrorCode::kSchema, path.string() + ": " + e.what());
  }
  return out;
}

void write_trajectories_jsonl(const std::vector<Trajectory>& trajectories,
                              const fs::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorCode::kIo, "cannot write " + path.string());
  for (const auto& tr : trajectories) {
    for (std::size_t j = 0; j < tr.steps.size(); ++j) {
      const StepRecord& r = tr.steps[j];
      Json rec = {{"sample", tr.sample_index},
                  {"step", j},
                  {"t", r.t},
                  {"s_prime", r.s_prime},
                  {"s", r.s},
                  {"x_before", to_vec(r.x_before)},
                  {"x_after", to_vec(r.x_after)},
                  {"eps_hat", to_vec(r.eps_hat)},
                  {"z", to_vec(r.z)},
                  {"noise_std", r.noise_std}};
      out << rec.dump() << "\n";
    }
  }
}

std::vector<Trajectory> read_run_trajectories(const fs::path& run_dir) {
  const fs::path run_json = run_dir / "run.json";
  const fs::path traj_path = run_dir / "trajectories.jsonl";
  require_artifact(run_json);
  require_artifact(traj_path);
  const Json run = read_json(run_json);
  std::vector<Trajectory> out;
  std::map<std::uint64_t, std::size_t> index;
  try {
    Trajectory proto;
    proto.kind = sampler_kind_from_string(run.at("sampler").get<std::string>());
    proto.coeffs.c_x = run.at("coeffs").at(0).get<double>();
    proto.coeffs.c_eps = run.at("coeffs").at(1).get<double>();
    proto.eta = run.at("eta").get<double>();
    proto.seed = run.at("seed").get<std::uint64_t>();

    std::ifstream in(traj_path);
    std::string line;
    while (std::getline(in, line)) {
      if (line.empty()) continue;
      const Json rec = Json::parse(line);
      const auto sample = rec.at("sample").get<std::uint64_t>();
      auto it = index.find(sample);
      if (it == index.end()) {
        it = index.emplace(sample, out.size()).first;
        out.push_back(proto);
        out.back().sample_index = sample;
      }
      Trajectory& tr = out[it->second];
      if (rec.at("step").get<std::size_t>() != tr.steps.size()) {
        throw Error(ErrorCode::kSchema, "trajectory steps out of order for sample " +
                                            std::to_string(sample));
      }
      StepRecord r;
      r.t = rec.at("t").get<int>();
      r.s_prime = rec.at("s_prime").get<int>();
      r.s = rec.at("s").get<int>();
      r.x_before = from_json_vec(rec.at("x_before"));
      r.x_after = from_json_vec(rec.at("x_after"));
      r.eps_hat = from_json_vec(rec.at("eps_hat"));
      r.z = from_json_vec(rec.at("z"));
      r.noise_std = rec.at("noise_std").get<double>();
      tr.steps.push_back(std::move(r));
      tr.x0 = tr.steps.back().x_after;
    }
  } catch (const Json::exception& e) {
    throw Error(ErrorCode::kSchema, traj_path.string() + ": " + e.what());
  }
  return out;
}

fs::path cmd_train(const RunConfig& cfg, const fs::path& out_dir) {
  fs::create_directories(out_dir);
  const NoiseSchedule sched = cfg.build_noise_schedule();
  spdlog::info("training denoiser: {} steps, batch {}", cfg.denoiser.steps,
               cfg.denoiser.batch_size);
  const TrainedDenoiser trained = train_mlp_denoiser(cfg.gmm, sched, cfg.denoiser);
  spdlog::info("held-out loss {:.6f} -> {:.6f}", trained.report.initial_heldout_loss,
               trained.report.final_heldout_loss);

  const fs::path model = out_dir / "denoiser.json";
  save_mlp(trained.net, model);
  const fs::path report = out_dir / "training.json";
  write_json(report, {{"initial_heldout_loss", trained.report.initial_heldout_loss},
                      {"final_heldout_loss", trained.report.final_heldout_loss},
                      {"final_batch_loss", trained.report.final_batch_loss},
                      {"steps", trained.report.steps},
                      {"parameter_count", trained.net.parameter_count()}});
  const std::string hash = config_hash(cfg);
  write_manifest(model, hash, cfg.seed);
  write_manifest(out_dir / "denoiser.bin", hash, cfg.seed);
  write_manifest(report, hash, cfg.seed);
  return model;
}

fs::path cmd_quantize(const RunConfig& cfg, const fs::path& denoiser_path,
                      const fs::path& out_dir) {
  require_artifact(denoiser_path);
  fs::create_directories(out_dir);
  const Json header = read_json(denoiser_path);
  if (header.value("format", "") != "qsched-mlp") {
    throw Error(ErrorCode::kSchema, "quantize expects a full-precision model header");
  }
  const NoiseSchedule sched = cfg.build_noise_schedule();
  const MlpDenoiser net = load_mlp(denoiser_path);
  check_compatible(cfg, net);

  const auto states =
      draw_calibration_states(cfg.gmm, sched, cfg.quant.calib_states, cfg.seed);
  const QuantizedMlpDenoiser q = quantize_denoiser(net, cfg.quant.bits, states);
  const PtqdParams ptqd = estimate_ptqd_params(net, q, states);
  const double mad = mean_abs_deviation(net, q, states);
  spdlog::info("quantized: gamma {:.6f}, delta_std {:.6f}, mean |dE| {:.6f}", ptqd.gamma,
               ptqd.delta_std, mad);

  const auto bits_json = [](const std::optional<int>& b) {
    return b ? Json(*b) : Json(nullptr);
  };
  const fs::path artifact = out_dir / "quantized.json";
  write_json(artifact, {{"format", "qsched-quantized-mlp"},
                        {"version", 1},
                        {"base_model", relative_ref(denoiser_path, out_dir)},
                        {"base_model_fnv1a", file_hash(denoiser_path)},
                        {"weight_bits", bits_json(cfg.quant.bits.weight_bits)},
                        {"act_bits", bits_json(cfg.quant.bits.act_bits)},
                        {"calib_states", cfg.quant.calib_states},
                        {"activation_ranges", q.activation_ranges()},
                        {"mean_abs_deviation", mad},
                        {"ptqd", ptqd.to_json()}});
  const fs::path ptqd_path = out_dir / "ptqd.json";
  write_json(ptqd_path, ptqd.to_json());
  const std::string hash = config_hash(cfg);
  write_manifest(artifact, hash, cfg.seed, {denoiser_path});
  write_manifest(ptqd_path, hash, cfg.seed, {denoiser_path});
  return artifact;
}

fs::path cmd_calibrate(const RunConfig& cfg, const fs::path& denoiser_path,
                       const fs::path& out_dir) {
  require_artifact(denoiser_path);
  fs::create_directories(out_dir);
  const NoiseSchedule sched = cfg.build_noise_schedule();
  const LoadedDenoiser d = load_denoiser(denoiser_path);
  check_compatible(cfg, *d.denoiser);

  const CoeffGrid grid = cfg.coeff_grid();
  const auto contexts = make_contexts(cfg.seed, cfg.calib.contexts);
  const JaqEvaluator jaq(cfg.jaq_config(), cfg.gmm);
  spdlog::info("grid search over {} points x {} contexts", grid.points.size(),
               contexts.size());
  const CalibrationResult result =
      grid_search(grid, cfg.sampler_config(sched), *d.denoiser, sched, jaq, contexts,
                  cfg.calib.batch, cfg.seed, cfg.calib.threads);
  spdlog::info("best (c_x, c_eps) = ({}, {}), jaq {:.6f}", result.best_coeffs.c_x,
               result.best_coeffs.c_eps, result.best_score.jaq);

  Json j = result.to_json();
  for (const auto& e : result.surface) {
    if (e.coeffs.is_identity()) {
      j["identity"] = {{"tc", e.score.tc}, {"iq", e.score.iq}, {"jaq", e.score.jaq}};
    }
  }
  j["k"] = cfg.calib.k;
  j["sampler"] = to_string(cfg.sampler.kind);
  const fs::path artifact = out_dir / "calibration.json";
  write_json(artifact, j);
  write_manifest(artifact, config_hash(cfg), cfg.seed, {denoiser_path});
  return artifact;
}

fs::path cmd_sample(const RunConfig& cfg, const fs::path& denoiser_path,
                    const fs::path& out_dir) {
  require_artifact(denoiser_path);
  fs::create_directories(out_dir);
  const NoiseSchedule sched = cfg.build_noise_schedule();
  const LoadedDenoiser d = load_denoiser(denoiser_path);
  check_compatible(cfg, *d.denoiser);

  SamplerConfig sc = cfg.sampler_config(sched);
  if (sc.kind == SamplerKind::kPtqd) {
    if (!d.ptqd) {
      throw Error(ErrorCode::kMissingCalibration,
                  "the ptqd sampler needs a quantized artifact with PTQD parameters");
    }
    sc.ptqd = d.ptqd;
  }
  sc.validate();
  spdlog::info("sampling {} x {} with {}", cfg.sampler.batch, sc.grid.n_steps(),
               to_string(sc.kind));
  const SampleResult res = sample_trajectory(sc, *d.denoiser, sched, cfg.sampler.batch,
                                             cfg.sampler.record_trajectories);

  const std::string hash = config_hash(cfg);
  const fs::path samples = out_dir / "samples.csv";
  write_samples_csv(res.samples, samples);
  write_manifest(samples, hash, cfg.seed, {denoiser_path});
  if (cfg.sampler.record_trajectories) {
    const fs::path traj = out_dir / "trajectories.jsonl";
    write_trajectories_jsonl(res.trajectories, traj);
    write_manifest(traj, hash, cfg.seed, {denoiser_path});
  }

  Json run = {{"sampler", to_string(sc.kind)},
              {"grid", sc.grid.steps},
              {"eta", sc.eta},
              {"coeffs", {sc.coeffs.c_x, sc.coeffs.c_eps}},
              {"seed", sc.seed},
              {"batch", cfg.sampler.batch},
              {"denoiser", relative_ref(denoiser_path, out_dir)},
              {"denoiser_fnv1a", file_hash(denoiser_path)},
              {"quantized", d.quantized},
              {"record_trajectories", cfg.sampler.record_trajectories},
              {"scores",
               {{"tc", tc_gmm_loglik(res.samples, cfg.gmm)},
                {"iq", iq_mode_sharpness(res.samples, cfg.gmm)}}}};
  if (res.samples.rows() > res.samples.cols()) {
    run["frechet_vs_gmm"] = frechet_vs_gmm(res.samples, cfg.gmm);
  }
  if (sc.ptqd) run["ptqd"] = sc.ptqd->to_json();
  const fs::path run_path = out_dir / "run.json";
  write_json(run_path, run);
  write_manifest(run_path, hash, cfg.seed, {denoiser_path});
  return samples;
}

fs::path cmd_analyze(const RunConfig& cfg, const fs::path& fp_run_dir,
                     const fs::path& q_run_dir, const fs::path& out_dir) {
  fs::create_directories(out_dir);
  const NoiseSchedule sched = cfg.build_noise_schedule();
  const auto fp = read_run_trajectories(fp_run_dir);
  const auto q = read_run_trajectories(q_run_dir);
  if (fp.empty()) throw Error(ErrorCode::kComparability, "fp run has no trajectories");
  const Json fp_run = read_json(fp_run_dir / "run.json");
  const Json q_run = read_json(q_run_dir / "run.json");
  if (fp_run.at("grid") != q_run.at("grid")) {
    throw Error(ErrorCode::kComparability, "runs use different timestep grids");
  }
  TimestepGrid grid{fp_run.at("grid").get<std::vector<int>>()};
  const SamplerCoeffs coeffs = sampler_coeffs(sched, grid, fp.front().eta);
  const ErrorReport rep = summarize_errors(fp, q, coeffs);

  Json table = Json::array();
  Json per_step = Json::array();
  std::ostringstream csv;
  csv << "step,t,s_prime,s,k,m,max_recursion_residual,max_recursion_relative,"
         "mean_delta_x_norm,mean_delta_eps_norm\n";
  char buf[512];
  for (std::size_t j = 0; j < coeffs.transitions.size(); ++j) {
    const auto& c = coeffs.transitions[j];
    table.push_back({{"t", c.t}, {"s_prime", c.s_prime}, {"s", c.s}, {"k", c.k}, {"m", c.m}});
    per_step.push_back({{"step", j},
                        {"max_recursion_residual", rep.max_recursion_residual[j]},
                        {"max_recursion_relative", rep.max_recursion_relative[j]},
                        {"mean_delta_x_norm", rep.mean_delta_x_norm[j]},
                        {"mean_delta_eps_norm", rep.mean_delta_eps_norm[j]}});
    std::snprintf(buf, sizeof(buf), "%zu,%d,%d,%d,%.17g,%.17g,%.17g,%.17g,%.17g,%.17g\n", j,
                  c.t, c.s_prime, c.s, c.k, c.m, rep.max_recursion_residual[j],
                  rep.max_recursion_relative[j], rep.mean_delta_x_norm[j],
                  rep.mean_delta_eps_norm[j]);
    csv << buf;
  }

  const Batch fp_samples = read_samples_csv(fp_run_dir / "samples.csv");
  const Batch q_samples = read_samples_csv(q_run_dir / "samples.csv");
  const double fd_fp = frechet_vs_gmm(fp_samples, cfg.gmm);
  const double fd_q = frechet_vs_gmm(q_samples, cfg.gmm);
  const double fd_pair = frechet_distance(fp_samples, q_samples);

  const Json report = {{"samples", rep.samples},
                       {"grid", grid.steps},
                       {"eta", fp.front().eta},
                       {"coefficients", table},
                       {"per_step", per_step},
                       {"closed_form",
                        {{"max_residual", rep.max_closed_form_residual},
                         {"max_relative", rep.max_closed_form_relative}}},
                       {"mean_delta_x0_norm", rep.mean_delta_x0_norm},
                       {"expected_error_bound", rep.expected_error_bound},
                       {"frechet",
                        {{"fp_vs_gmm", fd_fp}, {"q_vs_gmm", fd_q}, {"fp_vs_q", fd_pair}}}};

  const std::string hash = config_hash(cfg);
  const std::vector<fs::path> inputs = {fp_run_dir / "trajectories.jsonl",
                                        q_run_dir / "trajectories.jsonl"};
  const fs::path analysis = out_dir / "analysis.json";
  write_json(analysis, report);
  write_manifest(analysis, hash, cfg.seed, inputs);
  const fs::path steps_csv = out_dir / "analysis_steps.csv";
  write_text(steps_csv, csv.str());
  write_manifest(steps_csv, hash, cfg.seed, inputs);
  std::ostringstream fcsv;
  std::snprintf(buf, sizeof(buf), "fp,gmm,%.17g\nquantized,gmm,%.17g\nfp,quantized,%.17g\n",
                fd_fp, fd_q, fd_pair);
  fcsv << "run,reference,frechet_sq\n" << buf;
  const fs::path frechet = out_dir / "frechet.csv";
  write_text(frechet, fcsv.str());
  write_manifest(frechet, hash, cfg.seed, inputs);
  return analysis;
}

fs::path cmd_compare(const fs::path& records_csv, double k_factor,
                     const fs::path& out_dir) {
  require_artifact(records_csv);
  fs::create_directories(out_dir);
  std::ifstream in(records_csv);
  std::vector<MatchRecord> records;
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    std::vector<std::string> cells;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) cells.push_back(cell);
    if (cells.size() != 3) {
      throw Error(ErrorCode::kSchema, records_csv.string() + ":" + std::to_string(line_no) +
                                          ": expected a,b,winner");
    }
    if (line_no == 1 && cells[0] == "a" && cells[1] == "b" && cells[2] == "winner") continue;
    records.push_back({cells[0], cells[1], cells[2]});
  }
  const auto ratings = elo_ratings(records, k_factor);
  Json table = Json::object();
  for (const auto& [player, r] : ratings) table[player] = r;
  std::vector<std::pair<std::string, double>> order(ratings.begin(), ratings.end());
  std::stable_sort(order.begin(), order.end(),
                   [](const auto& a, const auto& b) { return a.second > b.second; });
  Json ranking = Json::array();
  for (const auto& [player, r] : order) ranking.push_back({{"player", player}, {"rating", r}});

  const fs::path artifact = out_dir / "elo.json";
  write_json(artifact, {{"k_factor", k_factor},
                        {"initial", 1000.0},
                        {"records", records.size()},
                        {"ratings", table},
                        {"ranking", ranking}});
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.17g", k_factor);
  write_manifest(artifact, hex64(fnv1a64(std::string("compare:k=") + buf)), std::nullopt,
                 {records_csv});
  return artifact;
}

fs::path cmd_pipeline(const RunConfig& cfg, const fs::path& out_dir) {
  fs::create_directories(out_dir);
  const fs::path model = cmd_train(cfg, out_dir / "model");
  const fs::path quantized = cmd_quantize(cfg, model, out_dir / "quant");
  const fs::path calib = cmd_calibrate(cfg, quantized, out_dir / "calib");
  const Json cal = read_json(calib);
  const PreconditionCoeffs best{cal.at("best").at("c_x").get<double>(),
                                cal.at("best").at("c_eps").get<double>()};

  const bool consistency = cfg.sampler.kind == SamplerKind::kLcm ||
                           cfg.sampler.kind == SamplerKind::kQSchedLcm;
  RunConfig plain = cfg;
  plain.sampler.kind = consistency ? SamplerKind::kLcm : SamplerKind::kTcd;
  plain.sampler.coeffs = {};
  plain.sampler.record_trajectories = !consistency;
  RunConfig tuned = cfg;
  tuned.sampler.kind = consistency ? SamplerKind::kQSchedLcm : SamplerKind::kQSched;
  tuned.sampler.coeffs = best;
  tuned.sampler.record_trajectories = false;

  cmd_sample(plain, model, out_dir / "runs" / "fp");
  cmd_sample(plain, quantized, out_dir / "runs" / "naive");
  cmd_sample(tuned, quantized, out_dir / "runs" / "qsched");
  std::vector<std::string> runs = {"fp", "naive", "qsched"};
  if (!consistency) {
    RunConfig ptqd = plain;
    ptqd.sampler.kind = SamplerKind::kPtqd;
    ptqd.sampler.record_trajectories = false;
    cmd_sample(ptqd, quantized, out_dir / "runs" / "ptqd");
    runs.push_back("ptqd");
  }

  Json fd = Json::object();
  for (const auto& r : runs) {
    fd[r] = read_json(out_dir / "runs" / r / "run.json").at("frechet_vs_gmm");
  }
  Json summary = {{"calibration",
                   {{"best", {best.c_x, best.c_eps}},
                    {"jaq_best", cal.at("best").at("jaq")},
                    {"jaq_identity",
                     cal.contains("identity") ? cal.at("identity").at("jaq") : Json(nullptr)}}},
                  {"frechet_vs_gmm", fd}};
  if (!consistency) {
    const fs::path analysis =
        cmd_analyze(plain, out_dir / "runs" / "fp", out_dir / "runs" / "naive",
                    out_dir / "analysis");
    const Json a = read_json(analysis);
    summary["error_analysis"] = {{"closed_form", a.at("closed_form")},
                                 {"mean_delta_x0_norm", a.at("mean_delta_x0_norm")},
                                 {"expected_error_bound", a.at("expected_error_bound")}};
  }
  const fs::path path = out_dir / "summary.json";
  write_json(path, summary);
  write_manifest(path, config_hash(cfg), cfg.seed, {calib});
  return path;
}

}  // namespace qsched::cli
