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

#include "qsched/calibrate.hpp"

#include <sys/wait.h>
#include <unistd.h>

#include <atomic>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <limits>
#include <sstream>
#include <thread>

#include "qsched/error.hpp"
#include "qsched/rng.hpp"

namespace qsched {
namespace {

using Json = nlohmann::json;

std::string shell_quote(const std::string& s) {
  std::string out = "'";
  for (char c : s) {
    if (c == '\'') {
      out += "'\\''";
    } else {
      out += c;
    }
  }
  return out + "'";
}

bool builtin(const std::string& id) {
  return id == "gmm_loglik" || id == "mode_sharpness";
}

double builtin_score(const std::string& id, const Batch& samples,
                     const GaussianMixture& gmm) {
  return id == "gmm_loglik" ? tc_gmm_loglik(samples, gmm)
                            : iq_mode_sharpness(samples, gmm);
}

double snap(double v) { return std::round(v * 1e9) / 1e9; }

// Strictly better under the documented ordering.
bool better(const SurfaceEntry& a, const SurfaceEntry& b) {
  if (a.score.jaq != b.score.jaq) return a.score.jaq > b.score.jaq;
  const double da = std::hypot(a.coeffs.c_x - 1.0, a.coeffs.c_eps - 1.0);
  const double db = std::hypot(b.coeffs.c_x - 1.0, b.coeffs.c_eps - 1.0);
  if (da != db) return da < db;
  if (a.coeffs.c_x != b.coeffs.c_x) return a.coeffs.c_x < b.coeffs.c_x;
  return a.coeffs.c_eps < b.coeffs.c_eps;
}

}  // namespace

double tc_gmm_loglik(const Batch& samples, const GaussianMixture& gmm) {
  if (samples.rows() < 1) throw Error(ErrorCode::kValidation, "no samples to score");
  double total = 0.0;
  for (Eigen::Index i = 0; i < samples.rows(); ++i) {
    total += gmm.log_density(samples.row(i).transpose());
  }
  return total / static_cast<double>(samples.rows());
}

double iq_mode_sharpness(const Batch& samples, const GaussianMixture& gmm) {
  if (samples.rows() < 1) throw Error(ErrorCode::kValidation, "no samples to score");
  double total = 0.0;
  for (Eigen::Index i = 0; i < samples.rows(); ++i) {
    double best = std::numeric_limits<double>::infinity();
    for (const auto& mu : gmm.means) {
      best = std::min(best, (samples.row(i).transpose() - mu).squaredNorm());
    }
    total += best;
  }
  return -total / (static_cast<double>(samples.rows()) * gmm.dim());
}

std::vector<CalibContext> make_contexts(std::uint64_t global_seed, int count) {
  std::vector<CalibContext> out;
  for (int i = 0; i < count; ++i) {
    out.push_back({i, mix_key({global_seed, static_cast<std::uint64_t>(StreamPurpose::kContext),
                               static_cast<std::uint64_t>(i)})});
  }
  return out;
}

void JaqConfig::validate() const {
  if (!(k >= 0.0) || !std::isfinite(k)) {
    throw Error(ErrorCode::kValidation, "JAQ weight k must be >= 0");
  }
  for (const ScorerSpec* s : {&tc, &iq}) {
    if (!builtin(s->id) && s->id != "external") {
      throw Error(ErrorCode::kValidation, "unknown scorer id '" + s->id + "'");
    }
    if (s->id == "external" && s->command.empty()) {
      throw Error(ErrorCode::kValidation, "external scorer needs a command");
    }
  }
}

void write_samples_csv(const Batch& samples, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw Error(ErrorCode::kIo, "cannot write " + path.string());
  for (Eigen::Index j = 0; j < samples.cols(); ++j) {
    out << (j ? "," : "") << "x" << j;
  }
  out << "\n";
  char buf[32];
  for (Eigen::Index i = 0; i < samples.rows(); ++i) {
    for (Eigen::Index j = 0; j < samples.cols(); ++j) {
      std::snprintf(buf, sizeof(buf), "%.17g", samples(i, j));
      out << (j ? "," : "") << buf;
    }
    out << "\n";
  }
}

Batch read_samples_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::kMissingArtifact, "cannot open " + path.string());
  std::string line;
  if (!std::getline(in, line)) throw Error(ErrorCode::kSchema, "empty samples CSV");
  const auto cols = static_cast<Eigen::Index>(std::count(line.begin(), line.end(), ',') + 1);
  std::vector<double> values;
  Eigen::Index rows = 0;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::stringstream ss(line);
    std::string cell;
    Eigen::Index n = 0;
    while (std::getline(ss, cell, ',')) {
      char* end = nullptr;
      const double v = std::strtod(cell.c_str(), &end);
      if (end == cell.c_str()) {
        throw Error(ErrorCode::kSchema, "bad number '" + cell + "' in " + path.string());
      }
      values.push_back(v);
      ++n;
    }
    if (n != cols) {
      throw Error(ErrorCode::kSchema, "ragged row in " + path.string());
    }
    ++rows;
  }
  Batch out(rows, cols);
  for (Eigen::Index i = 0; i < rows; ++i) {
    for (Eigen::Index j = 0; j < cols; ++j) out(i, j) = values[i * cols + j];
  }
  return out;
}

std::pair<double, double> external_scorer(const std::filesystem::path& samples_path,
                                          const std::filesystem::path& context_path,
                                          const std::string& command) {
  std::filesystem::path output_path;
  try {
    std::ifstream cin(context_path);
    if (!cin) throw Error(ErrorCode::kProtocol, "cannot read " + context_path.string());
    Json ctx;
    cin >> ctx;
    output_path = ctx.at("output_path").get<std::string>();
  } catch (const Json::exception& e) {
    throw Error(ErrorCode::kProtocol,
                "context JSON must declare output_path: " + std::string(e.what()));
  }
  std::filesystem::remove(output_path);

  const std::string cmd = command + " " + shell_quote(samples_path.string()) + " " +
                          shell_quote(context_path.string());
  const int status = std::system(cmd.c_str());
  if (status == -1 || !WIFEXITED(status) || WEXITSTATUS(status) != 0) {
    throw Error(ErrorCode::kScorer, "external scorer '" + command +
                                        "' failed with status " + std::to_string(status));
  }

  std::ifstream sin(output_path);
  if (!sin) {
    throw Error(ErrorCode::kProtocol,
                "external scorer wrote no scores to " + output_path.string());
  }
  try {
    Json scores;
    sin >> scores;
    const auto& tc = scores.at("tc");
    const auto& iq = scores.at("iq");
    if (!tc.is_number() || !iq.is_number()) {
      throw Error(ErrorCode::kProtocol, "scores 'tc' and 'iq' must be numbers");
    }
    return {tc.get<double>(), iq.get<double>()};
  } catch (const Json::exception& e) {
    throw Error(ErrorCode::kProtocol,
                "malformed scores from '" + command + "': " + std::string(e.what()));
  }
}

JaqEvaluator::JaqEvaluator(JaqConfig cfg, GaussianMixture gmm,
                           std::filesystem::path work_dir)
    : cfg_(std::move(cfg)), gmm_(std::move(gmm)), work_dir_(std::move(work_dir)) {
  cfg_.validate();
  gmm_.validate();
}

ScoreTriple JaqEvaluator::score(const Batch& samples, const CalibContext& context) const {
  if (samples.rows() < 1) throw Error(ErrorCode::kValidation, "no samples to score");
  ScoreTriple out;
  std::pair<double, double> external{0.0, 0.0};
  if (cfg_.tc.id == "external" || cfg_.iq.id == "external") {
    // Both slots share one invocation when they name the same command.
    const std::string& command =
        cfg_.tc.id == "external" ? cfg_.tc.command : cfg_.iq.command;
    static std::atomic<std::uint64_t> counter{0};
    const std::string stem = "qsched_" + std::to_string(::getpid()) + "_" +
                             std::to_string(counter.fetch_add(1));
    const auto samples_path = work_dir_ / (stem + "_samples.csv");
    const auto context_path = work_dir_ / (stem + "_context.json");
    const auto output_path = work_dir_ / (stem + "_scores.json");
    write_samples_csv(samples, samples_path);
    {
      std::ofstream ctx(context_path);
      ctx << Json{{"context_id", context.id},
                  {"seed", context.seed},
                  {"dim", samples.cols()},
                  {"output_path", output_path.string()}}
                 .dump(2);
    }
    try {
      external = external_scorer(samples_path, context_path, command);
      if (cfg_.tc.id == "external" && cfg_.iq.id == "external" &&
          cfg_.iq.command != cfg_.tc.command) {
        external.second = external_scorer(samples_path, context_path, cfg_.iq.command).second;
      }
    } catch (...) {
      std::filesystem::remove(samples_path);
      std::filesystem::remove(context_path);
      std::filesystem::remove(output_path);
      throw;
    }
    std::filesystem::remove(samples_path);
    std::filesystem::remove(context_path);
    std::filesystem::remove(output_path);
  }
  try {
    out.tc = cfg_.tc.id == "external" ? external.first
                                      : builtin_score(cfg_.tc.id, samples, gmm_);
    out.iq = cfg_.iq.id == "external" ? external.second
                                      : builtin_score(cfg_.iq.id, samples, gmm_);
  } catch (const Error& e) {
    throw Error(ErrorCode::kScorer, "scorer failed: " + std::string(e.what()));
  }
  out.jaq = out.tc + cfg_.k * out.iq;
  return out;
}

ScoreTriple jaq_score(const Batch& samples, const CalibContext& context,
                      const JaqEvaluator& evaluator) {
  return evaluator.score(samples, context);
}

CoeffGrid CoeffGrid::range(double cx_lo, double cx_hi, double ce_lo, double ce_hi,
                           double step) {
  if (!(step > 0.0) || !(cx_lo <= cx_hi) || !(ce_lo <= ce_hi) || !(cx_lo > 0.0) ||
      !(ce_lo > 0.0)) {
    throw Error(ErrorCode::kValidation, "invalid coefficient grid range");
  }
  auto axis = [step](double lo, double hi) {
    std::vector<double> v;
    const auto n = static_cast<long>(std::floor((hi - lo) / step + 1e-9));
    for (long i = 0; i <= n; ++i) v.push_back(snap(lo + static_cast<double>(i) * step));
    return v;
  };
  CoeffGrid grid;
  for (double cx : axis(cx_lo, cx_hi)) {
    for (double ce : axis(ce_lo, ce_hi)) grid.points.push_back({cx, ce});
  }
  return grid;
}

nlohmann::json CalibrationResult::to_json() const {
  Json surf = Json::array();
  for (const auto& e : surface) {
    surf.push_back({{"c_x", e.coeffs.c_x},
                    {"c_eps", e.coeffs.c_eps},
                    {"tc", e.score.tc},
                    {"iq", e.score.iq},
                    {"jaq", e.score.jaq}});
  }
  Json ctx = Json::array();
  for (const auto& c : contexts) ctx.push_back({{"id", c.id}, {"seed", c.seed}});
  return {{"best",
           {{"c_x", best_coeffs.c_x},
            {"c_eps", best_coeffs.c_eps},
            {"tc", best_score.tc},
            {"iq", best_score.iq},
            {"jaq", best_score.jaq}}},
          {"surface", surf},
          {"contexts", ctx},
          {"batch", batch},
          {"seed", seed}};
}

CalibrationResult grid_search(const CoeffGrid& grid, const SamplerConfig& base,
                              const Denoiser& denoiser, const NoiseSchedule& schedule,
                              const JaqEvaluator& jaq,
                              const std::vector<CalibContext>& contexts, int batch,
                              std::uint64_t seed, int threads) {
  if (grid.points.empty()) throw Error(ErrorCode::kValidation, "coefficient grid is empty");
  if (batch < 1) throw Error(ErrorCode::kValidation, "calibration batch must be >= 1");
  if (contexts.empty()) throw Error(ErrorCode::kValidation, "no calibration contexts");
  if (grid.require_identity) {
    bool has_identity = false;
    for (const auto& p : grid.points) has_identity |= p.is_identity();
    if (!has_identity) {
      throw Error(ErrorCode::kValidation, "coefficient grid must contain (1, 1)");
    }
  }
  SamplerConfig cfg = base;
  switch (base.kind) {
    case SamplerKind::kTcd:
    case SamplerKind::kQSched: cfg.kind = SamplerKind::kQSched; break;
    case SamplerKind::kLcm:
    case SamplerKind::kQSchedLcm: cfg.kind = SamplerKind::kQSchedLcm; break;
    case SamplerKind::kPtqd:
      throw Error(ErrorCode::kValidation, "grid search does not apply to the ptqd sampler");
  }
  for (const auto& p : grid.points) p.validate();

  CalibrationResult result;
  result.contexts = contexts;
  result.batch = batch;
  result.seed = seed;
  result.surface.resize(grid.points.size());

  auto evaluate = [&](std::size_t idx) {
    SamplerConfig local = cfg;
    local.coeffs = grid.points[idx];
    double tc = 0.0;
    double iq = 0.0;
    for (const auto& ctx : contexts) {
      local.seed = ctx.seed;
      const Batch samples = sample_trajectory(local, denoiser, schedule, batch).samples;
      const ScoreTriple s = jaq.score(samples, ctx);
      tc += s.tc;
      iq += s.iq;
    }
    SurfaceEntry& e = result.surface[idx];
    e.coeffs = grid.points[idx];
    e.score.tc = tc / static_cast<double>(contexts.size());
    e.score.iq = iq / static_cast<double>(contexts.size());
    e.score.jaq = e.score.tc + jaq.config().k * e.score.iq;
  };

  const int n_threads = std::max(1, threads);
  if (n_threads == 1) {
    for (std::size_t i = 0; i < grid.points.size(); ++i) evaluate(i);
  } else {
    std::atomic<std::size_t> next{0};
    std::exception_ptr failure;
    std::atomic<bool> failed{false};
    std::vector<std::thread> pool;
    for (int w = 0; w < n_threads; ++w) {
      pool.emplace_back([&] {
        for (std::size_t i = next++; i < grid.points.size() && !failed; i = next++) {
          try {
            evaluate(i);
          } catch (...) {
            if (!failed.exchange(true)) failure = std::current_exception();
          }
        }
      });
    }
    for (auto& th : pool) th.join();
    if (failure) std::rethrow_exception(failure);
  }

  std::size_t best = 0;
  for (std::size_t i = 1; i < result.surface.size(); ++i) {
    if (better(result.surface[i], result.surface[best])) best = i;
  }
  result.best_coeffs = result.surface[best].coeffs;
  result.best_score = result.surface[best].score;
  return result;
}

}  // namespace qsched
