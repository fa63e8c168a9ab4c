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

#include <sys/wait.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include <gtest/gtest.h>

#include "commands.hpp"
#include "qsched/config.hpp"
#include "qsched/error.hpp"
#include "test_support.hpp"

#ifndef QSCHED_BINARY
#error "QSCHED_BINARY must point at the built qsched tool"
#endif
#ifndef QSCHED_SOURCE_DIR
#error "QSCHED_SOURCE_DIR must point at the source tree"
#endif

namespace qsched {
namespace {

namespace fs = std::filesystem;
using Json = nlohmann::json;

// A configuration small enough to train in well under a second.
Json tiny_config() {
  return Json::parse(R"({
    "version": 1,
    "seed": 7,
    "output_dir": "out",
    "gmm": {"weights": [0.5, 0.5], "means": [[-1.0, 0.0], [1.0, 0.0]], "stds": [0.3, 0.3]},
    "denoiser": {"hidden": [16, 16], "steps": 60, "batch_size": 64, "holdout": 128},
    "quant": {"calib_states": 64},
    "sampler": {"batch": 200, "record_trajectories": true},
    "calib": {"cx_range": [1.0, 1.0], "ceps_range": [1.0, 1.0], "contexts": 1, "batch": 16}
  })");
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

struct RunResult {
  int code = -1;
  std::string out;
  std::string err;
};

RunResult run_tool(const std::string& args, const fs::path& scratch) {
  const fs::path out = scratch / "stdout.txt";
  const fs::path err = scratch / "stderr.txt";
  const std::string cmd = std::string(QSCHED_BINARY) + " " + args + " > '" + out.string() +
                          "' 2> '" + err.string() + "'";
  const int status = std::system(cmd.c_str());
  RunResult r;
  r.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  r.out = slurp(out);
  r.err = slurp(err);
  return r;
}

void write_text(const fs::path& p, const std::string& s) {
  std::ofstream f(p);
  f << s;
}

TEST(ConfigTest, DemoConfigRoundTrips) {
  const RunConfig c = load_config(fs::path(QSCHED_SOURCE_DIR) / "configs" / "demo.json");
  EXPECT_EQ(c.version, 1);
  EXPECT_EQ(c.gmm.size(), 3);
  const RunConfig back = RunConfig::from_json(c.to_json());
  EXPECT_EQ(back.to_json(), c.to_json());
  EXPECT_EQ(config_hash(back), config_hash(c));
  EXPECT_EQ(config_hash(c).size(), 16u);
  EXPECT_EQ(c.coeff_grid().points.size(), 441u);
}

TEST(ConfigTest, RejectsUnknownFields) {
  for (const char* ptr : {"/extra", "/sampler/extra", "/calib/tc_scorer/extra", "/gmm/extra"}) {
    Json j = tiny_config();
    j[Json::json_pointer(ptr)] = 1;
    try {
      RunConfig::from_json(j);
      FAIL() << ptr;
    } catch (const Error& e) {
      EXPECT_EQ(e.code(), ErrorCode::kSchema) << ptr;
    }
  }
}

TEST(ConfigTest, RejectsMissingOrWrongStructure) {
  Json j = tiny_config();
  j.erase("version");
  EXPECT_THROW(RunConfig::from_json(j), Error);
  j = tiny_config();
  j["version"] = 2;
  EXPECT_THROW(RunConfig::from_json(j), Error);
  j = tiny_config();
  j.erase("gmm");
  EXPECT_THROW(RunConfig::from_json(j), Error);
  j = tiny_config();
  j["sampler"]["steps"] = "four";
  try {
    RunConfig::from_json(j);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kSchema);
  }
  j = tiny_config();
  j["sampler"]["coeffs"] = {1.0};
  EXPECT_THROW(RunConfig::from_json(j), Error);
}

TEST(ConfigTest, ValidatesValues) {
  Json j = tiny_config();
  j["sampler"]["eta"] = 1.0;
  EXPECT_THROW(RunConfig::from_json(j).validate(), Error);
  j = tiny_config();
  j["calib"]["k"] = -1.0;
  EXPECT_THROW(RunConfig::from_json(j).validate(), Error);
  j = tiny_config();
  j["gmm"]["weights"] = {0.5, 0.6};
  EXPECT_THROW(RunConfig::from_json(j).validate(), Error);
  RunConfig::from_json(tiny_config()).validate();
}

TEST(ConfigTest, HashTracksContent) {
  const RunConfig a = RunConfig::from_json(tiny_config());
  Json j = tiny_config();
  j["seed"] = 8;
  EXPECT_NE(config_hash(a), config_hash(RunConfig::from_json(j)));
  EXPECT_EQ(fnv1a64(""), 0xcbf29ce484222325ULL);
  EXPECT_EQ(fnv1a64("a"), 0xaf63dc4c8601ec8cULL);
}

TEST(OverridesTest, ApplyAndParse) {
  RunConfig c = RunConfig::from_json(tiny_config());
  cli::Overrides o;
  o.seed = 99;
  o.coeffs = cli::parse_coeffs("1.05,0.95");
  o.eta = 0.3;
  o.steps = 8;
  o.sampler = SamplerKind::kQSched;
  o.k_factor = 3.0;
  cli::apply_overrides(c, o);
  EXPECT_EQ(c.seed, 99u);
  EXPECT_EQ(c.denoiser.seed, 99u);
  EXPECT_EQ(c.sampler.coeffs.c_x, 1.05);
  EXPECT_EQ(c.sampler.coeffs.c_eps, 0.95);
  EXPECT_EQ(c.sampler.eta, 0.3);
  EXPECT_EQ(c.sampler.steps, 8);
  EXPECT_EQ(c.sampler.kind, SamplerKind::kQSched);
  EXPECT_EQ(c.calib.k, 3.0);
  EXPECT_THROW(cli::parse_coeffs("1.0"), Error);
  EXPECT_THROW(cli::parse_coeffs("a,b"), Error);
}

TEST(ToolErrorTest, UsageAndMissingInputs) {
  testing::TempDir dir("cli_err");
  RunResult r = run_tool("", dir.path());
  EXPECT_EQ(r.code, 2);
  r = run_tool("sample --config '" + (dir.path() / "nope.json").string() +
                   "' --denoiser x.json",
               dir.path());
  EXPECT_EQ(r.code, 3);
  const Json err = Json::parse(r.err.substr(r.err.find('{')));
  EXPECT_EQ(err["error"]["code"], "missing_artifact");

  Json bad = tiny_config();
  bad["surprise"] = true;
  write_text(dir.path() / "bad.json", bad.dump());
  r = run_tool("train --config '" + (dir.path() / "bad.json").string() + "'", dir.path());
  EXPECT_EQ(r.code, 2);
  EXPECT_EQ(Json::parse(r.err.substr(r.err.find('{')))["error"]["code"], "schema_violation");

  write_text(dir.path() / "ok.json", tiny_config().dump());
  r = run_tool("sample --config '" + (dir.path() / "ok.json").string() + "' --denoiser '" +
                   (dir.path() / "missing.json").string() + "' --out '" +
                   (dir.path() / "o").string() + "'",
               dir.path());
  EXPECT_EQ(r.code, 3);
  r = run_tool("sample --config '" + (dir.path() / "ok.json").string() + "' --coeffs 1.0 " +
                   "--denoiser x --out '" + (dir.path() / "o").string() + "'",
               dir.path());
  EXPECT_EQ(r.code, 2);
}

class ToolFlowTest : public ::testing::Test {
 protected:
  static void SetUpTestSuite() {
    dir_ = new testing::TempDir("cli_flow");
    write_text(config(), tiny_config().dump(2));
    const RunResult r =
        run_tool("train --config '" + config().string() + "' --out '" + model_dir().string() +
                     "'",
                 dir_->path());
    ASSERT_EQ(r.code, 0) << r.err;
  }
  static void TearDownTestSuite() {
    delete dir_;
    dir_ = nullptr;
  }

  static fs::path config() { return dir_->path() / "tiny.json"; }
  static fs::path model_dir() { return dir_->path() / "model"; }
  static fs::path model() { return model_dir() / "denoiser.json"; }
  static std::string base(const std::string& sub) {
    return sub + " --config '" + config().string() + "'";
  }

  static testing::TempDir* dir_;
};

testing::TempDir* ToolFlowTest::dir_ = nullptr;

TEST_F(ToolFlowTest, TrainWritesArtifactsAndManifests) {
  EXPECT_TRUE(fs::exists(model()));
  EXPECT_TRUE(fs::exists(model_dir() / "denoiser.bin"));
  const Json m = cli::read_json(model_dir() / "denoiser.json.manifest.json");
  EXPECT_EQ(m["config_hash"], config_hash(load_config(config())));
  EXPECT_EQ(m["seed"], 7);
  EXPECT_EQ(m["content_fnv1a"].get<std::string>().size(), 16u);
}

TEST_F(ToolFlowTest, SamplingIsByteIdentical) {
  const fs::path a = dir_->path() / "run_a";
  const fs::path b = dir_->path() / "run_b";
  const std::string args = base("sample") + " --denoiser '" + model().string() + "' --eta 0.3";
  ASSERT_EQ(run_tool(args + " --out '" + a.string() + "'", dir_->path()).code, 0);
  ASSERT_EQ(run_tool(args + " --out '" + b.string() + "'", dir_->path()).code, 0);
  for (const char* f : {"samples.csv", "trajectories.jsonl", "run.json",
                        "samples.csv.manifest.json"}) {
    ASSERT_TRUE(fs::exists(a / f)) << f;
    EXPECT_EQ(slurp(a / f), slurp(b / f)) << f;
  }
  const fs::path c = dir_->path() / "run_c";
  ASSERT_EQ(run_tool(args + " --seed 8 --out '" + c.string() + "'", dir_->path()).code, 0);
  EXPECT_NE(slurp(a / "samples.csv"), slurp(c / "samples.csv"));
  const Batch x = read_samples_csv(a / "samples.csv");
  EXPECT_EQ(x.rows(), 200);
  EXPECT_EQ(x.cols(), 2);
  EXPECT_EQ(cli::read_run_trajectories(a).size(), 200u);
}

TEST_F(ToolFlowTest, CalibrateOnIdentityGrid) {
  const fs::path out = dir_->path() / "calib";
  const RunResult r =
      run_tool(base("calibrate") + " --denoiser '" + model().string() + "' --out '" +
                   out.string() + "'",
               dir_->path());
  ASSERT_EQ(r.code, 0) << r.err;
  const Json j = cli::read_json(out / "calibration.json");
  EXPECT_EQ(j["best"]["c_x"], 1.0);
  EXPECT_EQ(j["best"]["c_eps"], 1.0);
  EXPECT_EQ(j["identity"]["jaq"], j["best"]["jaq"]);
  EXPECT_EQ(j["surface"].size(), 1u);
}

TEST_F(ToolFlowTest, QuantizeSampleAndAnalyze) {
  const fs::path q = dir_->path() / "quant";
  RunResult r = run_tool(base("quantize") + " --denoiser '" + model().string() + "' --out '" +
                             q.string() + "'",
                         dir_->path());
  ASSERT_EQ(r.code, 0) << r.err;
  const Json qa = cli::read_json(q / "quantized.json");
  EXPECT_EQ(qa["format"], "qsched-quantized-mlp");
  EXPECT_EQ(qa["weight_bits"], 4);
  EXPECT_EQ(qa["act_bits"], 8);
  EXPECT_TRUE(qa["ptqd"].contains("gamma"));

  const fs::path fp_run = dir_->path() / "fp_run";
  const fs::path q_run = dir_->path() / "q_run";
  const fs::path p_run = dir_->path() / "p_run";
  ASSERT_EQ(run_tool(base("sample") + " --eta 0.2 --denoiser '" + model().string() +
                         "' --out '" + fp_run.string() + "'",
                     dir_->path())
                .code,
            0);
  const std::string qden = " --denoiser '" + (q / "quantized.json").string() + "'";
  ASSERT_EQ(
      run_tool(base("sample") + " --eta 0.2" + qden + " --out '" + q_run.string() + "'",
               dir_->path())
          .code,
      0);
  r = run_tool(base("sample") + " --sampler ptqd --eta 0.2" + qden + " --out '" +
                   p_run.string() + "'",
               dir_->path());
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_EQ(cli::read_json(p_run / "run.json")["sampler"], "ptqd");

  // The ptqd sampler refuses a full-precision artifact.
  r = run_tool(base("sample") + " --sampler ptqd --denoiser '" + model().string() +
                   "' --out '" + (dir_->path() / "bad").string() + "'",
               dir_->path());
  EXPECT_EQ(r.code, 4);
  EXPECT_NE(r.err.find("missing_calibration"), std::string::npos);

  const fs::path an = dir_->path() / "analysis";
  r = run_tool(base("analyze") + " --fp-run '" + fp_run.string() + "' --q-run '" +
                   q_run.string() + "' --out '" + an.string() + "'",
               dir_->path());
  ASSERT_EQ(r.code, 0) << r.err;
  const Json a = cli::read_json(an / "analysis.json");
  EXPECT_LT(a["closed_form"]["max_relative"].get<double>(), 1e-9);
  EXPECT_GT(a["mean_delta_x0_norm"].get<double>(), 0.0);
  EXPECT_TRUE(fs::exists(an / "analysis_steps.csv"));

  // Runs with different eta are not comparable.
  const fs::path other = dir_->path() / "fp_eta0";
  ASSERT_EQ(run_tool(base("sample") + " --denoiser '" + model().string() + "' --out '" +
                         other.string() + "'",
                     dir_->path())
                .code,
            0);
  r = run_tool(base("analyze") + " --fp-run '" + other.string() + "' --q-run '" +
                   q_run.string() + "' --out '" + an.string() + "'",
               dir_->path());
  EXPECT_EQ(r.code, 4);
  EXPECT_NE(r.err.find("comparability_error"), std::string::npos);
}

TEST_F(ToolFlowTest, TamperedBaseModelIsRejected) {
  const fs::path q = dir_->path() / "quant_tamper";
  ASSERT_EQ(run_tool(base("quantize") + " --denoiser '" + model().string() + "' --out '" +
                         q.string() + "'",
                     dir_->path())
                .code,
            0);
  Json qa = cli::read_json(q / "quantized.json");
  qa["base_model_fnv1a"] = "0000000000000000";
  cli::write_json(q / "quantized.json", qa);
  const RunResult r = run_tool(base("sample") + " --denoiser '" + (q / "quantized.json").string() +
                                   "' --out '" + (dir_->path() / "t").string() + "'",
                               dir_->path());
  EXPECT_NE(r.code, 0);
}

TEST(CompareToolTest, EloFromRecords) {
  testing::TempDir dir("cmp");
  write_text(dir.path() / "records.csv", "a,b,winner\nqsched,naive,qsched\n");
  const RunResult r = run_tool("compare --records '" + (dir.path() / "records.csv").string() +
                                   "' --out '" + dir.path().string() + "'",
                               dir.path());
  ASSERT_EQ(r.code, 0) << r.err;
  const Json j = cli::read_json(dir.path() / "elo.json");
  EXPECT_DOUBLE_EQ(j["ratings"]["qsched"].get<double>(), 1016.0);
  EXPECT_DOUBLE_EQ(j["ratings"]["naive"].get<double>(), 984.0);
  EXPECT_EQ(j["ranking"][0]["player"], "qsched");

  write_text(dir.path() / "bad.csv", "qsched,naive,nobody\n");
  EXPECT_EQ(run_tool("compare --records '" + (dir.path() / "bad.csv").string() + "' --out '" +
                         dir.path().string() + "'",
                     dir.path())
                .code,
            2);
}

}  // namespace
}  // namespace qsched
