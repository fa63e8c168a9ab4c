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

#ifndef QSCHED_TOOLS_COMMANDS_HPP_
#define QSCHED_TOOLS_COMMANDS_HPP_

#include <cstdint>
#include <filesystem>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"
#include "qsched/config.hpp"
#include "qsched/denoiser.hpp"
#include "qsched/quant.hpp"
#include "qsched/sampler.hpp"

namespace qsched::cli {

namespace fs = std::filesystem;

inline constexpr const char* kToolVersion = "0.1.0";

struct Overrides {
  std::optional<std::uint64_t> seed;
  std::optional<PreconditionCoeffs> coeffs;
  std::optional<double> eta;
  std::optional<int> steps;
  std::optional<SamplerKind> sampler;
  std::optional<double> k_factor;
};

// Applies the overrides and revalidates.
void apply_overrides(RunConfig& cfg, const Overrides& o);

// "CX,CE" -> coefficients.
PreconditionCoeffs parse_coeffs(const std::string& text);

struct LoadedDenoiser {
  std::shared_ptr<const Denoiser> denoiser;
  std::optional<PtqdParams> ptqd;  // present for quantized artifacts
  bool quantized = false;
};

// Accepts either a full-precision model header or a quantized artifact.
LoadedDenoiser load_denoiser(const fs::path& path);

// Writes `<file>.manifest.json` next to `file`.
void write_manifest(const fs::path& file, const std::string& config_hash,
                    std::optional<std::uint64_t> seed,
                    const std::vector<fs::path>& inputs = {});

void write_json(const fs::path& path, const nlohmann::json& j);
nlohmann::json read_json(const fs::path& path);

// One JSON object per step per sample.
void write_trajectories_jsonl(const std::vector<Trajectory>& trajectories,
                              const fs::path& path);
// Run metadata (kind, coeffs, eta, seed) comes from the run's run.json.
std::vector<Trajectory> read_run_trajectories(const fs::path& run_dir);

// Each command returns the path of its primary artifact.
fs::path cmd_train(const RunConfig& cfg, const fs::path& out_dir);
fs::path cmd_quantize(const RunConfig& cfg, const fs::path& denoiser_path,
                      const fs::path& out_dir);
fs::path cmd_calibrate(const RunConfig& cfg, const fs::path& denoiser_path,
                       const fs::path& out_dir);
fs::path cmd_sample(const RunConfig& cfg, const fs::path& denoiser_path,
                    const fs::path& out_dir);
fs::path cmd_analyze(const RunConfig& cfg, const fs::path& fp_run_dir,
                     const fs::path& q_run_dir, const fs::path& out_dir);
fs::path cmd_compare(const fs::path& records_csv, double k_factor,
                     const fs::path& out_dir);

// train -> quantize -> calibrate -> sample (fp, naive, qsched, ptqd) ->
// analyze, laid out under out_dir; returns summary.json.
fs::path cmd_pipeline(const RunConfig& cfg, const fs::path& out_dir);

}  // namespace qsched::cli

#endif  // QSCHED_TOOLS_COMMANDS_HPP_
