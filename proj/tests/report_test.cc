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

#include "dermtriage/report.h"

#include <random>

#include <gtest/gtest.h>

#include "dermtriage/error.h"
#include "dermtriage/metrics.h"
#include "oracles.h"
#include "test_util.h"

namespace dermtriage::metrics {
namespace {

struct Fixture {
  DatasetManifest manifest;
  std::vector<scoring::ImageScore> scores;
  std::vector<detection::Detection> detections;
};

Fixture MakeFixture(std::uint64_t seed, int n, double dermoscopy_fraction) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(0, 1);
  Fixture f;
  for (int i = 0; i < n; ++i) {
    ImageRecord r;
    r.image_id = "img_" + std::to_string(i);
    r.patient_id = "p" + std::to_string(i);
    r.path = r.image_id + ".png";
    r.capture = u(rng) < dermoscopy_fraction ? Capture::kDermoscopy : Capture::kWideField;
    r.width = r.height = 100;
    const int lesions = 1 + int(u(rng) * 2);
    for (int k = 0; k < lesions; ++k) {
      const auto label = static_cast<LesionLabel>(int(u(rng) * kNumLesionLabels));
      r.rois.push_back({20 + 60 * u(rng), 20 + 60 * u(rng), 8 + 10 * u(rng), 8 + 10 * u(rng), label});
    }
    const int y = r.ImageLabel();
    scoring::ImageScore s;
    s.image_id = r.image_id;
    s.probability = std::clamp(0.5 * u(rng) + 0.3 * y, 0.0, 1.0);
    s.aggregator = scoring::AggregationKind::kAverage;
    f.scores.push_back(s);
    for (const auto& roi : r.rois) {
      if (u(rng) < 0.2) continue;
      detection::Detection d;
      d.box = {roi.x_center + 4 * (u(rng) - 0.5), roi.y_center + 4 * (u(rng) - 0.5),
               roi.width * (0.8 + 0.4 * u(rng)), roi.height * (0.8 + 0.4 * u(rng)), std::nullopt};
      d.score = 0.5 + 0.5 * u(rng);
      d.class_probs = {d.score};
      d.source_image_id = r.image_id;
      f.detections.push_back(d);
    }
    if (u(rng) < 0.3) {
      detection::Detection fp;
      fp.box = {50, 50, 10, 10, std::nullopt};
      fp.score = 0.5 + 0.5 * u(rng);
      fp.class_probs = {fp.score};
      fp.source_image_id = r.image_id;
      f.detections.push_back(fp);
    }
    f.manifest.records.push_back(std::move(r));
  }
  return f;
}

bool InStratum(const ImageRecord& r, const std::string& stratum) {
  if (stratum == "all") return true;
  return (stratum == "dermoscopy") == (r.capture == Capture::kDermoscopy);
}

TEST(StratifiedReportTest, MatchesPerStratumMetricCalls) {
  const auto f = MakeFixture(3, 120, 0.4);
  const auto report = StratifiedReport(f.manifest, f.scores, f.detections);
  ASSERT_EQ(report.strata.size(), 3u);
  for (const char* name : kStrata) {
    std::vector<ScoredLabel> pairs;
    std::vector<ImageBoxes> boxes;
    for (std::size_t i = 0; i < f.manifest.records.size(); ++i) {
      const auto& r = f.manifest.records[i];
      if (!InStratum(r, name)) continue;
      pairs.push_back({f.scores[i].probability, r.ImageLabel()});
      ImageBoxes ib;
      ib.ground_truths = r.rois;
      for (const auto& d : f.detections) {
        if (d.source_image_id == r.image_id) ib.predictions.push_back({d.box, d.score});
      }
      boxes.push_back(ib);
    }
    const auto& s = report.Stratum(name);
    EXPECT_EQ(s.scored_images, int(pairs.size()));
    EXPECT_EQ(*s.Get("auc").value, Auc(pairs)) << name;
    EXPECT_NEAR(*s.Get("auc").value, oracle::MannWhitneyAuc(pairs), 1e-12) << name;
    EXPECT_EQ(*s.Get("ap").value, AveragePrecision(pairs)) << name;
    EXPECT_NEAR(*s.Get("ap").value, oracle::BruteForceAp(pairs), 1e-12) << name;
    EXPECT_EQ(*s.Get("map50").value, MapAt(boxes, 0.5)) << name;
    EXPECT_EQ(*s.Get("map75").value, MapAt(boxes, 0.75)) << name;
    EXPECT_EQ(*s.Get("map50_95").value, ComputeMap(boxes).map50_95) << name;
    EXPECT_EQ(*s.Get("recall_any_overlap").value, RecallAnyOverlap(boxes)) << name;
    const auto iou = SummarizeIou(BestMatchIous(boxes));
    EXPECT_EQ(*s.Get("iou_median").value, iou.median) << name;
    EXPECT_EQ(*s.Get("iou_q1").value, iou.q1) << name;
    EXPECT_EQ(*s.Get("iou_q3").value, iou.q3) << name;
  }
}

TEST(StratifiedReportTest, StrataCountsSumToAll) {
  const auto f = MakeFixture(4, 90, 0.3);
  const auto report = StratifiedReport(f.manifest, f.scores, f.detections);
  const auto& all = report.Stratum("all");
  const auto& phone = report.Stratum("smartphone");
  const auto& derm = report.Stratum("dermoscopy");
  EXPECT_EQ(phone.scored_images + derm.scored_images, all.scored_images);
  EXPECT_EQ(phone.positives + derm.positives, all.positives);
  EXPECT_EQ(phone.ground_truths + derm.ground_truths, all.ground_truths);
  EXPECT_EQ(phone.detection_images + derm.detection_images, all.detection_images);
  EXPECT_EQ(all.scored_images, 90);
}

TEST(StratifiedReportTest, AllDermoscopyLeavesSmartphoneEmpty) {
  const auto f = MakeFixture(5, 30, 1.0);
  const auto report = StratifiedReport(f.manifest, f.scores, f.detections);
  const auto& phone = report.Stratum("smartphone");
  EXPECT_EQ(phone.scored_images, 0);
  for (const auto& [name, v] : phone.metrics) {
    EXPECT_FALSE(v.value.has_value()) << name;
    EXPECT_EQ(v.status, "empty") << name;
  }
  EXPECT_NE(report.ToCsv().find("smartphone,auc,,empty,0\n"), std::string::npos);
}

TEST(StratifiedReportTest, SingleClassStratumIsUndefined) {
  auto f = MakeFixture(6, 40, 0.5);
  for (auto& r : f.manifest.records) {
    if (r.capture != Capture::kDermoscopy) continue;
    for (auto& roi : r.rois) roi.label = LesionLabel::kNV;
  }
  const auto report = StratifiedReport(f.manifest, f.scores, f.detections);
  const auto& auc = report.Stratum("dermoscopy").Get("auc");
  EXPECT_FALSE(auc.value.has_value());
  EXPECT_EQ(auc.status.rfind("undefined", 0), 0u);
  EXPECT_FALSE(report.Stratum("dermoscopy").Get("ap").value.has_value());
  EXPECT_TRUE(report.Stratum("dermoscopy").Get("map50").value.has_value());
  EXPECT_TRUE(report.Stratum("all").Get("auc").value.has_value());
}

TEST(StratifiedReportTest, DetectionMetricsWithoutDetectionsAreNotEvaluated) {
  const auto f = MakeFixture(7, 30, 0.5);
  const auto report = StratifiedReport(f.manifest, f.scores, {});
  EXPECT_TRUE(report.Stratum("all").Get("auc").value.has_value());
  EXPECT_EQ(report.Stratum("all").Get("map50").status, "not evaluated");
}

TEST(StratifiedReportTest, UnknownImageIsError) {
  auto f = MakeFixture(8, 10, 0.5);
  f.scores[0].image_id = "nope";
  EXPECT_THROW(StratifiedReport(f.manifest, f.scores, f.detections), DataError);
  auto g = MakeFixture(8, 10, 0.5);
  g.detections[0].source_image_id = "nope";
  EXPECT_THROW(StratifiedReport(g.manifest, g.scores, g.detections), DataError);
}

TEST(StratifiedReportTest, OutputsAreDeterministic) {
  const auto f = MakeFixture(9, 50, 0.4);
  testing::TempDir dir("report");
  StratifiedReport(f.manifest, f.scores, f.detections).Write(dir.Sub("a"));
  StratifiedReport(f.manifest, f.scores, f.detections).Write(dir.Sub("b"));
  const auto csv = testing::ReadFile(dir.Sub("a/report.csv"));
  EXPECT_EQ(csv, testing::ReadFile(dir.Sub("b/report.csv")));
  EXPECT_EQ(testing::ReadFile(dir.Sub("a/report.txt")), testing::ReadFile(dir.Sub("b/report.txt")));
  EXPECT_EQ(csv.rfind("stratum,metric,value,status,n\n", 0), 0u);
  EXPECT_EQ(std::count(csv.begin(), csv.end(), '\n'), 1 + 3 * 9);
}

}  // namespace
}  // namespace dermtriage::metrics
