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

#include "dermtriage/detector.h"

#include <random>
#include <sstream>

#include <gtest/gtest.h>
#include <json.hpp>

#include "dermtriage/error.h"
#include "dermtriage/metrics.h"
#include "dermtriage/synth.h"
#include "oracles.h"
#include "test_util.h"

namespace dermtriage::detection {
namespace {

Detection Det(double cx, double cy, double w, double h, double score) {
  return {{cx, cy, w, h, std::nullopt}, {score}, score, "img", ""};
}

TEST(GranularityTest, ClassesAndMapping) {
  const auto one = GranularityConfig::Make(Granularity::kOneClass);
  const auto mal = GranularityConfig::Make(Granularity::kMalignancy);
  const auto sub = GranularityConfig::Make(Granularity::kSubType);
  EXPECT_EQ(one.num_classes(), 1);
  EXPECT_EQ(mal.num_classes(), 2);
  EXPECT_EQ(sub.num_classes(), 8);
  for (LesionLabel l : kAllLesionLabels) {
    EXPECT_EQ(one.ClassOf(l), 0);
    EXPECT_EQ(mal.ClassOf(l), IsMalignant(l) ? 1 : 0);
    EXPECT_EQ(sub.class_names[sub.ClassOf(l)], LabelName(l));
    EXPECT_EQ(sub.ClassOf(l), LabelIndex(l));
  }
  EXPECT_EQ(sub.MalignantClasses(), (std::vector<int>{0, 2, 3}));
  EXPECT_THROW(ParseGranularity("two_class"), SchemaError);
}

TEST(ScheduleTest, StepDecay) {
  const DetectorTrainConfig cfg;
  EXPECT_DOUBLE_EQ(StepLr(cfg, 0), 1e-3);
  EXPECT_DOUBLE_EQ(StepLr(cfg, 59999), 1e-3);
  EXPECT_NEAR(StepLr(cfg, 60000), 1e-4, 1e-18);
  EXPECT_NEAR(StepLr(cfg, 79999), 1e-4, 1e-18);
  const auto half = cfg.Scaled(0.5);
  EXPECT_EQ(half.total_steps, 40000);
  EXPECT_EQ(half.decay_steps, (std::vector<int>{30000, 40000}));
  EXPECT_DOUBLE_EQ(StepLr(half, 29999), 1e-3);
  EXPECT_NEAR(StepLr(half, 30000), 1e-4, 1e-18);
  EXPECT_EQ(half.rpn_batch, cfg.rpn_batch);
  EXPECT_EQ(half.base_lr, cfg.base_lr);
}

TEST(ConfigTest, Validation) {
  DetectorTrainConfig cfg;
  EXPECT_NO_THROW(cfg.Validate());
  cfg.decay_steps = {70000, 60000};
  EXPECT_THROW(cfg.Validate(), ConfigError);
  cfg.decay_steps = {60000, 90000};
  EXPECT_THROW(cfg.Validate(), ConfigError);
  const auto round = DetectorTrainConfig::FromJson(DetectorTrainConfig{}.ToJson());
  EXPECT_EQ(round.ToJson(), DetectorTrainConfig{}.ToJson());
}

TEST(NmsTest, DuplicateAndDisjoint) {
  auto kept = Nms({Det(5, 5, 4, 4, 0.8), Det(5, 5, 4, 4, 0.9)}, 0.5);
  ASSERT_EQ(kept.size(), 1u);
  EXPECT_DOUBLE_EQ(kept[0].score, 0.9);
  kept = Nms({Det(5, 5, 4, 4, 0.8), Det(50, 50, 4, 4, 0.9)}, 0.5);
  EXPECT_EQ(kept.size(), 2u);
  EXPECT_TRUE(Nms({}, 0.5).empty());
}

TEST(NmsTest, MatchesOracleUpToEightBoxes) {
  std::mt19937_64 rng(17);
  std::uniform_int_distribution<int> pos(0, 8), size(1, 5), score(1, 6), count(0, 8);
  for (int t = 0; t < 3000; ++t) {
    std::vector<Detection> dets;
    for (int n = count(rng); n > 0; --n) {
      dets.push_back(Det(pos(rng), pos(rng), size(rng), size(rng), score(rng) / 7.0));
    }
    for (double thr : {0.0, 0.3, 0.5, 0.7, 1.0}) {
      const auto kept = Nms(dets, thr);
      const auto expect = oracle::NmsOracle(dets, thr);
      ASSERT_EQ(kept.size(), expect.size());
      for (std::size_t i = 0; i < kept.size(); ++i) {
        EXPECT_EQ(kept[i].box, dets[expect[i]].box);
        EXPECT_EQ(kept[i].score, dets[expect[i]].score);
      }
      for (std::size_t i = 0; i < kept.size(); ++i) {
        for (std::size_t j = i + 1; j < kept.size(); ++j) {
          if (thr > 0) {
            EXPECT_LT(metrics::Iou(kept[i].box, kept[j].box), thr);
          }
        }
      }
    }
  }
}

TEST(DetectionJsonTest, RoundTrip) {
  Detection d{{10.5, 20, 8, 6, std::nullopt}, {0.2, 0.7}, 0.7, "img_1", "abc"};
  const Detection back = DetectionFromJson(DetectionToJson(d));
  EXPECT_EQ(back.box, d.box);
  EXPECT_EQ(back.class_probs, d.class_probs);
  EXPECT_EQ(back.source_image_id, "img_1");
  EXPECT_EQ(back.model_id, "abc");
  testing::TempDir dir("dets");
  {
    std::ofstream out(dir.Sub("d.jsonl"));
    WriteDetectionsJsonl({d, d}, out);
  }
  EXPECT_EQ(ReadDetectionsJsonl(dir.Sub("d.jsonl")).size(), 2u);
}

class TrainedDetectorTest : public ::testing::Test {
 protected:
  static void SetUpTestSuite() {
    dir_ = new testing::TempDir("detector");
    synth::SynthConfig sc;
    sc.num_images = 200;
    sc.seed = 11;
    auto ds = synth::GenerateDataset(sc, dir_->Sub("data"));
    manifest_ = new DatasetManifest(PatientSplit(ds.manifest, {0.8, 0.2}, 3));
    const auto cfg = DetectorTrainConfig{}.Scaled(2000.0 / 80000.0);
    model_ = new DetectorModel(
        TrainDetector(*manifest_, GranularityConfig::Make(Granularity::kOneClass), cfg, &log_));
  }
  static void TearDownTestSuite() {
    delete model_;
    delete manifest_;
    delete dir_;
  }

  static testing::TempDir* dir_;
  static DatasetManifest* manifest_;
  static DetectorModel* model_;
  static std::vector<TrainStepLog> log_;
};

testing::TempDir* TrainedDetectorTest::dir_ = nullptr;
DatasetManifest* TrainedDetectorTest::manifest_ = nullptr;
DetectorModel* TrainedDetectorTest::model_ = nullptr;
std::vector<TrainStepLog> TrainedDetectorTest::log_;

TEST_F(TrainedDetectorTest, ScaledScheduleReachesRecallOnVal) {
  EXPECT_EQ(log_.size(), 2000u);
  EXPECT_LT(log_.back().loss, log_.front().loss);
  std::vector<metrics::ImageBoxes> images;
  for (const auto* r : manifest_->InSplit(Split::kVal)) {
    metrics::ImageBoxes ib;
    for (const auto& d : model_->Detect(LoadImage(manifest_->ResolvePath(*r)), r->image_id)) {
      ib.predictions.push_back({d.box, d.score});
    }
    ib.ground_truths = r->rois;
    images.push_back(std::move(ib));
  }
  ASSERT_FALSE(images.empty());
  EXPECT_GE(metrics::RecallAnyOverlap(images), 0.9);
}

TEST_F(TrainedDetectorTest, DetectionContract) {
  for (const auto* r : manifest_->InSplit(Split::kVal)) {
    const Image img = LoadImage(manifest_->ResolvePath(*r));
    const auto dets = model_->Detect(img, r->image_id);
    for (std::size_t i = 0; i < dets.size(); ++i) {
      const auto& d = dets[i];
      if (i > 0) {
        EXPECT_LE(d.score, dets[i - 1].score);
      }
      double sum = 0;
      for (double p : d.class_probs) {
        EXPECT_GT(p, 0);
        EXPECT_LT(p, 1);
        sum += p;
      }
      EXPECT_LE(sum, 1 + 1e-6);
      EXPECT_DOUBLE_EQ(d.score, *std::max_element(d.class_probs.begin(), d.class_probs.end()));
      EXPECT_GE(d.score, model_->config().score_threshold);
      EXPECT_EQ(d.source_image_id, r->image_id);
      EXPECT_EQ(d.model_id, model_->id());
    }
    for (std::size_t i = 0; i < dets.size(); ++i) {
      for (std::size_t j = i + 1; j < dets.size(); ++j) {
        EXPECT_LT(metrics::Iou(dets[i].box, dets[j].box), model_->config().nms_iou);
      }
    }
  }
}

TEST_F(TrainedDetectorTest, BlankBackgroundHasNoDetections) {
  for (std::uint64_t seed : {1, 2, 3}) {
    EXPECT_TRUE(model_->Detect(synth::RenderBlank(128, 112, SkinTone::kLight, seed)).empty());
  }
}

TEST_F(TrainedDetectorTest, SingleBlobIsFound) {
  synth::SynthConfig sc;
  sc.num_images = 6;
  sc.min_lesions = sc.max_lesions = 1;
  sc.seed = 999;
  int found = 0;
  for (const auto& plan : synth::PlanDataset(sc)) {
    std::vector<Roi> planted;
    const Image img = synth::RenderImage(plan, &planted);
    const auto dets = model_->Detect(img);
    bool hit = false;
    for (const auto& d : dets) hit |= metrics::Iou(d.box, planted[0]) > 0.5;
    found += hit;
  }
  EXPECT_EQ(found, 6);
}

TEST_F(TrainedDetectorTest, DetectIsPure) {
  const auto* r = manifest_->InSplit(Split::kVal).front();
  const Image img = LoadImage(manifest_->ResolvePath(*r));
  const auto a = model_->Detect(img, "x");
  const auto b = model_->Detect(img, "x");
  ASSERT_EQ(a.size(), b.size());
  for (std::size_t i = 0; i < a.size(); ++i) {
    EXPECT_EQ(a[i].box, b[i].box);
    EXPECT_EQ(a[i].class_probs, b[i].class_probs);
  }
}

TEST_F(TrainedDetectorTest, ExportFeatures) {
  const auto* r = manifest_->InSplit(Split::kVal).front();
  const Image img = LoadImage(manifest_->ResolvePath(*r));
  const auto dets = model_->Detect(img, r->image_id);
  ASSERT_FALSE(dets.empty());
  const auto f = model_->ExportFeatures(img, dets);
  ASSERT_EQ(f.size(), dets.size());
  for (const auto& v : f) EXPECT_EQ(int(v.size()), model_->feature_size());
  EXPECT_EQ(model_->ExportFeatures(img, dets), f);
  EXPECT_TRUE(model_->ExportFeatures(img, {}).empty());
  auto foreign = dets;
  foreign[0].model_id = "someone-else";
  EXPECT_THROW(model_->ExportFeatures(img, foreign), ModelError);
}

TEST_F(TrainedDetectorTest, SaveLoadRoundTrip) {
  model_->Save(dir_->Sub("ckpt"));
  EXPECT_TRUE(std::filesystem::exists(dir_->Sub("ckpt/model.json")));
  EXPECT_TRUE(std::filesystem::exists(dir_->Sub("ckpt/training_log.csv")));
  const auto loaded = DetectorModel::Load(dir_->Sub("ckpt"));
  EXPECT_EQ(loaded.id(), model_->id());
  const auto* r = manifest_->InSplit(Split::kVal).front();
  const Image img = LoadImage(manifest_->ResolvePath(*r));
  const auto a = model_->Detect(img), b = loaded.Detect(img);
  ASSERT_EQ(a.size(), b.size());
  for (std::size_t i = 0; i < a.size(); ++i) EXPECT_EQ(a[i].class_probs, b[i].class_probs);
}

TEST_F(TrainedDetectorTest, TrainingIsDeterministic) {
  const auto cfg = DetectorTrainConfig{}.Scaled(20.0 / 80000.0);
  const auto g = GranularityConfig::Make(Granularity::kMalignancy);
  const auto a = TrainDetector(*manifest_, g, cfg);
  const auto b = TrainDetector(*manifest_, g, cfg);
  EXPECT_EQ(a.id(), b.id());
  auto other = cfg;
  other.seed = 2;
  EXPECT_NE(TrainDetector(*manifest_, g, other).id(), a.id());
}

TEST_F(TrainedDetectorTest, PreconditionErrors) {
  DatasetManifest unlabeled = *manifest_;
  unlabeled.records[0].rois[0].label.reset();
  unlabeled.splits[unlabeled.records[0].image_id] = Split::kTrain;
  const auto cfg = DetectorTrainConfig{}.Scaled(10.0 / 80000.0);
  EXPECT_THROW(TrainDetector(unlabeled, GranularityConfig::Make(Granularity::kSubType), cfg),
               DataError);
  EXPECT_NO_THROW(TrainDetector(unlabeled, GranularityConfig::Make(Granularity::kOneClass), cfg));
  DatasetManifest empty = *manifest_;
  for (auto& [id, s] : empty.splits) s = Split::kTest;
  EXPECT_THROW(TrainDetector(empty, GranularityConfig::Make(Granularity::kOneClass), cfg),
               DataError);
}

TEST_F(TrainedDetectorTest, CorruptImageIsDecodeError) {
  testing::WriteFile(dir_->Sub("junk.png"), "not an image");
  EXPECT_THROW(LoadImage(dir_->Sub("junk.png")), DecodeError);
}

}  // namespace
}  // namespace dermtriage::detection
