// Copyright 2026 The dermtriage Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include <gtest/gtest.h>
#include <json.hpp>

#include "dermtriage/image_scorer.h"
#include "dermtriage/manifest.h"
#include "test_util.h"

namespace dermtriage {
namespace {

namespace fs = std::filesystem;
using nlohmann::json;

struct CliRun {
  int code;
  std::string err;
};

// Runs the CLI with `args`, capturing the exit code and stderr.
CliRun Cli(const std::string& args, const std::string& err_file) {
  const std::string cmd =
      std::string(DERMTRIAGE_BIN) + " --log-level warn " + args + " >/dev/null 2>" + err_file;
  const int status = std::system(cmd.c_str());
  return {WIFEXITED(status) ? WEXITSTATUS(status) : -1, testing::ReadFile(err_file)};
}

std::vector<json> JsonLines(const std::string& path) {
  std::ifstream in(path);
  std::vector<json> out;
  for (std::string line; std::getline(in, line);) {
    if (!line.empty()) out.push_back(json::parse(line));
  }
  return out;
}

class CliTest : public ::testing::Test {
 protected:
  static void SetUpTestSuite() {
    dir_ = new testing::TempDir("cli");
    const std::string err = dir_->Sub("setup.err");
    auto must = [&](const std::string& args) {
      const CliRun r = Cli(args, err);
      ASSERT_EQ(r.code, 0) << args << "\n" << r.err;
    };
    must("synth --out " + D("data") + " --num-images 60 --seed 5 --train-fraction 0.7 --val-fraction 0.0");
    must("train-detector --manifest " + D("data/manifest.json") + " --out " + D("det") +
         " --scale 0.0005");
    must("train-classifier --manifest " + D("data/manifest.json") + " --out " + D("cls") +
         " --scale 0.01");
    must("train-direct --manifest " + D("data/manifest.json") + " --out " + D("direct") +
         " --scale 0.01");
  }
  static void TearDownTestSuite() { delete dir_; }
  static std::string D(const std::string& sub) { return dir_->Sub(sub); }
  static testing::TempDir* dir_;
};

testing::TempDir* CliTest::dir_ = nullptr;

TEST_F(CliTest, SynthWritesDatasetSplitsAndRunManifest) {
  const auto m = LoadManifest(D("data/manifest.json"), D("data/splits.json"));
  EXPECT_EQ(m.records.size(), 60u);
  EXPECT_EQ(m.splits.size(), 60u);
  const json run = json::parse(testing::ReadFile(D("data/run_manifest.json")));
  EXPECT_EQ(run["command"], "synth");
  EXPECT_EQ(run["seed"], 5);
  EXPECT_EQ(run["config_hash"].get<std::string>().size(), 64u);
  for (const char* sub : {"det", "cls", "direct"}) {
    const json r = json::parse(testing::ReadFile(D(std::string(sub) + "/run_manifest.json")));
    ASSERT_FALSE(r["inputs"].empty()) << sub;
    EXPECT_EQ(r["inputs"][0]["sha256"].get<std::string>().size(), 64u) << sub;
  }
}

TEST_F(CliTest, ScoreEmitsImageScoreLinesPerImage) {
  const CliRun r = Cli("score --manifest " + D("data/manifest.json") + " --out " + D("score_ta") +
                        " --detector " + D("det") + " --classifier " + D("cls") +
                        " --strategy two_stage --aggregator average",
                    D("score.err"));
  ASSERT_EQ(r.code, 0) << r.err;
  const auto m = LoadManifest(D("data/manifest.json"), D("data/splits.json"));
  const auto lines = JsonLines(D("score_ta/scores_two_stage_average.jsonl"));
  ASSERT_EQ(lines.size(), m.InSplit(Split::kTest).size());
  for (std::size_t i = 0; i < lines.size(); ++i) {
    const auto s = scoring::ImageScoreFromJson(lines[i]);
    EXPECT_EQ(s.image_id, m.InSplit(Split::kTest)[i]->image_id);
    EXPECT_EQ(s.strategy, scoring::StrategyKind::kTwoStage);
    EXPECT_EQ(s.aggregator, scoring::AggregationKind::kAverage);
    EXPECT_GE(s.probability, 0);
    EXPECT_LE(s.probability, 1);
  }
  EXPECT_TRUE(fs::exists(D("score_ta/detections_one_class.jsonl")));
}

TEST_F(CliTest, SweepEmitsTwelveCellGrid) {
  const CliRun r = Cli("score --manifest " + D("data/manifest.json") + " --out " + D("sweep") +
                        " --detector " + D("det") + " --classifier " + D("cls") + " --direct " +
                        D("direct"),
                    D("sweep.err"));
  ASSERT_EQ(r.code, 0) << r.err;
  std::istringstream csv(testing::ReadFile(D("sweep/comparison.csv")));
  std::string line;
  std::getline(csv, line);
  EXPECT_EQ(line, "strategy,aggregator,auc,ap,status,n_images");
  int rows = 0, missing = 0;
  while (std::getline(csv, line)) {
    ++rows;
    missing += line.find("not evaluated") != std::string::npos;
  }
  EXPECT_EQ(rows, 12);
  EXPECT_EQ(missing, 6);  // no malignancy or sub-type detector given
}

TEST_F(CliTest, EvaluateIsDeterministic) {
  ASSERT_EQ(Cli("score --manifest " + D("data/manifest.json") + " --out " + D("eval_in") +
                    " --detector " + D("det") + " --classifier " + D("cls") +
                    " --strategy two_stage --aggregator maximum",
                D("e.err"))
                .code,
            0);
  for (const char* out : {"eval_a", "eval_b"}) {
    const CliRun r = Cli("evaluate --manifest " + D("data/manifest.json") + " --scores " +
                          D("eval_in/scores_two_stage_maximum.jsonl") + " --detections " +
                          D("eval_in/detections_one_class.jsonl") + " --out " + D(out),
                      D("e.err"));
    ASSERT_EQ(r.code, 0) << r.err;
  }
  const std::string a = testing::ReadFile(D("eval_a/report.csv"));
  EXPECT_FALSE(a.empty());
  EXPECT_EQ(a, testing::ReadFile(D("eval_b/report.csv")));
  EXPECT_EQ(testing::ReadFile(D("eval_a/report.txt")), testing::ReadFile(D("eval_b/report.txt")));
}

TEST_F(CliTest, ExportFeaturesWritesCsv) {
  const CliRun r = Cli("export-features --manifest " + D("data/manifest.json") + " --detector " +
                        D("det") + " --out " + D("features"),
                    D("f.err"));
  ASSERT_EQ(r.code, 0) << r.err;
  const std::string csv = testing::ReadFile(D("features/features.csv"));
  EXPECT_EQ(csv.rfind("image_id,", 0), 0u);
}

TEST_F(CliTest, ErrorsExitNonZeroWithStructuredMessage) {
  std::ofstream(D("bad_config.json")) << R"({"epochs": 1, "no_such_key": 3})";
  CliRun r = Cli("train-classifier --manifest " + D("data/manifest.json") + " --out " + D("x") +
                  " --config " + D("bad_config.json"),
              D("x.err"));
  EXPECT_EQ(r.code, 4);
  const json err = json::parse(r.err.substr(r.err.find('{')));
  EXPECT_EQ(err["error"], "config");
  EXPECT_NE(err["message"].get<std::string>().find("no_such_key"), std::string::npos);

  std::ofstream(D("bad_manifest.json")) << R"({"images": [{"image_id": 1}]})";
  r = Cli("train-classifier --manifest " + D("bad_manifest.json") + " --out " + D("y"), D("y.err"));
  EXPECT_EQ(r.code, 2);

  r = Cli("score --manifest " + D("data/manifest.json") + " --out " + D("z") +
              " --strategy one_step_malignancy --detector " + D("det"),
          D("z.err"));
  EXPECT_EQ(r.code, 4);
  r = Cli("score --manifest " + D("data/manifest.json") + " --out " + D("z") +
              " --aggregator median --detector " + D("det"),
          D("z.err"));
  EXPECT_EQ(r.code, 2);
}

}  // namespace
}  // namespace dermtriage
