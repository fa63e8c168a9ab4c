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

// qsched: command-line front end for the scheduling lab.

#include <cstdlib>
#include <iostream>
#include <optional>
#include <string>

#include <spdlog/sinks/stdout_color_sinks.h>
#include <spdlog/spdlog.h>

#include "CLI11.hpp"
#include "commands.hpp"
#include "json.hpp"
#include "qsched/error.hpp"

namespace {

using qsched::ErrorCode;
namespace cli = qsched::cli;

int exit_code(ErrorCode code) {
  switch (code) {
    case ErrorCode::kValidation:
    case ErrorCode::kSchema: return 2;
    case ErrorCode::kMissingArtifact:
    case ErrorCode::kIo: return 3;
    default: return 4;
  }
}

void print_error(std::string_view code, const std::string& message) {
  std::cerr << nlohmann::json{{"error", {{"code", code}, {"message", message}}}}.dump()
            << "\n";
}

void setup_logging() {
  auto logger = spdlog::stderr_color_mt("qsched");
  spdlog::set_default_logger(logger);
  spdlog::set_pattern("[%l] %v");
  const char* env = std::getenv("QSCHED_LOG");
  spdlog::set_level(env ? spdlog::level::from_str(env) : spdlog::level::warn);
}

}  // namespace

int main(int argc, char** argv) {
  setup_logging();

  CLI::App app{"Quantization-aware few-step diffusion scheduling lab"};
  app.set_version_flag("--version", cli::kToolVersion);
  app.require_subcommand(1);

  std::string config_path;
  std::string out_dir;
  std::optional<std::uint64_t> seed;
  std::optional<std::string> coeffs;
  std::optional<double> eta;
  std::optional<int> steps;
  std::optional<std::string> sampler;
  std::optional<double> k_factor;
  std::string denoiser;
  std::string fp_run;
  std::string q_run;
  std::string records;

  auto add_common = [&](CLI::App* sub) {
    sub->add_option("--config", config_path, "Run config JSON")->required();
    sub->add_option("--out", out_dir, "Output directory (default: config output_dir)");
    sub->add_option("--seed", seed, "Override the global seed");
  };
  auto add_sampling = [&](CLI::App* sub) {
    sub->add_option("--coeffs", coeffs, "Q-Sched coefficients CX,CE");
    sub->add_option("--eta", eta, "Stochasticity in [0, 1)");
    sub->add_option("--steps", steps, "Number of sampling steps");
    sub->add_option("--sampler", sampler, "Sampler kind")
        ->check(CLI::IsMember({"tcd", "qsched", "ptqd", "lcm", "qsched_lcm"}));
  };

  auto* train = app.add_subcommand("train", "Train the MLP denoiser");
  add_common(train);
  auto* quantize = app.add_subcommand("quantize", "Fake-quantize a trained denoiser");
  add_common(quantize);
  quantize->add_option("--denoiser", denoiser, "Trained model header")->required();
  auto* calibrate = app.add_subcommand("calibrate", "Grid-search the coefficients");
  add_common(calibrate);
  add_sampling(calibrate);
  calibrate->add_option("--denoiser", denoiser, "Denoiser artifact")->required();
  calibrate->add_option("--k-factor", k_factor, "JAQ weight k");
  auto* sample = app.add_subcommand("sample", "Draw samples");
  add_common(sample);
  add_sampling(sample);
  sample->add_option("--denoiser", denoiser, "Denoiser artifact")->required();
  auto* analyze = app.add_subcommand("analyze", "Error propagation and Frechet report");
  add_common(analyze);
  analyze->add_option("--fp-run", fp_run, "Full-precision run directory")->required();
  analyze->add_option("--q-run", q_run, "Quantized run directory")->required();
  auto* compare = app.add_subcommand("compare", "Elo ratings from pairwise records");
  compare->add_option("--records", records, "CSV of a,b,winner")->required();
  compare->add_option("--k-factor", k_factor, "Elo K factor");
  compare->add_option("--out", out_dir, "Output directory")->required();
  auto* pipeline = app.add_subcommand("pipeline", "Run every stage end to end");
  add_common(pipeline);

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForVersion& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    print_error("usage_error", e.what());
    return 2;
  }

  try {
    if (compare->parsed()) {
      const auto path = cli::cmd_compare(records, k_factor.value_or(32.0), out_dir);
      std::cout << path.string() << "\n";
      return 0;
    }

    qsched::RunConfig cfg = qsched::load_config(config_path);
    cli::Overrides o;
    o.seed = seed;
    if (coeffs) o.coeffs = cli::parse_coeffs(*coeffs);
    o.eta = eta;
    o.steps = steps;
    if (sampler) o.sampler = qsched::sampler_kind_from_string(*sampler);
    o.k_factor = k_factor;
    cli::apply_overrides(cfg, o);
    const std::filesystem::path out = out_dir.empty() ? cfg.output_dir : out_dir;

    std::filesystem::path result;
    if (train->parsed()) result = cli::cmd_train(cfg, out);
    if (quantize->parsed()) result = cli::cmd_quantize(cfg, denoiser, out);
    if (calibrate->parsed()) result = cli::cmd_calibrate(cfg, denoiser, out);
    if (sample->parsed()) result = cli::cmd_sample(cfg, denoiser, out);
    if (analyze->parsed()) result = cli::cmd_analyze(cfg, fp_run, q_run, out);
    if (pipeline->parsed()) result = cli::cmd_pipeline(cfg, out);
    std::cout << result.string() << "\n";
    return 0;
  } catch (const qsched::Error& e) {
    print_error(qsched::to_string(e.code()), e.what());
    return exit_code(e.code());
  } catch (const std::exception& e) {
    print_error("internal_error", e.what());
    return 70;
  }
}
