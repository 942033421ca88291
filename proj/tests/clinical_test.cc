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

#include <cmath>
#include <memory>
#include <random>

#include <gtest/gtest.h>

#include "dermtriage/combined.h"
#include "dermtriage/covariates.h"
#include "dermtriage/error.h"
#include "dermtriage/logistic.h"
#include "dermtriage/metrics.h"
#include "dermtriage/synth.h"
#include "test_util.h"

namespace dermtriage::clinical {
namespace {

CovariateSchema SmallSchema() {
  CovariateSchema s;
  s.continuous = {"age", "visits"};
  s.categorical = {{"sex", {"F", "M"}}, {"race", {"white", "black"}}};
  return s;
}

CovariateRow Row(const std::string& id, std::string age, std::string visits, std::string sex,
                 std::string race) {
  return {id, {{"age", age}, {"visits", visits}, {"sex", sex}, {"race", race}}};
}

TEST(StandardizerTest, PopulationStatistics) {
  const std::vector<CovariateRow> rows = {Row("a", "1", "5", "F", "white"),
                                          Row("b", "2", "5", "M", "black"),
                                          Row("c", "3", "5", "F", "white")};
  const auto stats = FitStandardizer(rows, SmallSchema());
  ASSERT_EQ(stats.names, std::vector<std::string>{"age"});
  EXPECT_DOUBLE_EQ(stats.mean[0], 2.0);
  EXPECT_NEAR(stats.stddev[0], std::sqrt(2.0 / 3.0), 1e-15);
  EXPECT_EQ(stats.dropped, std::vector<std::string>{"visits"});
  EXPECT_THROW(FitStandardizer({rows[0]}, SmallSchema()), DataError);
  EXPECT_THROW(FitStandardizer({}, SmallSchema()), DataError);
}

TEST(StandardizerTest, RefitOnStandardizedColumnIsIdentity) {
  std::mt19937_64 rng(4);
  std::normal_distribution<double> n(40, 12);
  CovariateSchema schema;
  schema.continuous = {"x"};
  std::vector<CovariateRow> rows;
  for (int i = 0; i < 500; ++i) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.17g", n(rng));
    rows.push_back({"r" + std::to_string(i), {{"x", buf}}});
  }
  const auto stats = FitStandardizer(rows, schema);
  std::vector<CovariateRow> standardized;
  double sum = 0, sq = 0;
  for (const auto& r : rows) {
    const double z = EncodeCovariates(r, schema, stats)[0];
    sum += z;
    sq += z * z;
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.17g", z);
    standardized.push_back({r.image_id, {{"x", buf}}});
  }
  EXPECT_LT(std::abs(sum / 500), 1e-9);
  EXPECT_NEAR(std::sqrt(sq / 500 - (sum / 500) * (sum / 500)), 1.0, 1e-9);
  const auto again = FitStandardizer(standardized, schema);
  EXPECT_NEAR(again.mean[0], 0.0, 1e-9);
  EXPECT_NEAR(again.stddev[0], 1.0, 1e-9);
}

TEST(EncodeTest, OneHotBlocksAndOtherSlot) {
  const auto schema = SmallSchema();
  const std::vector<CovariateRow> rows = {Row("a", "30", "1", "F", "white"),
                                          Row("b", "50", "3", "M", "black")};
  const auto stats = FitStandardizer(rows, schema);
  EXPECT_EQ(EncodedSize(schema, stats), 2u + 3u + 3u);
  const auto v = EncodeCovariates(Row("c", "40", "", "M", "asian"), schema, stats);
  ASSERT_EQ(v.size(), 8u);
  EXPECT_EQ(v[0], 0.0);  // age at the training mean
  EXPECT_EQ(v[1], 0.0);  // missing value imputed with the mean
  EXPECT_EQ(std::vector<double>(v.begin() + 2, v.begin() + 5), (std::vector<double>{0, 1, 0}));
  EXPECT_EQ(std::vector<double>(v.begin() + 5, v.end()), (std::vector<double>{0, 0, 1}));
  const auto missing = EncodeCovariates(Row("d", "40", "2", "", "white"), schema, stats);
  EXPECT_EQ(std::vector<double>(missing.begin() + 2, missing.begin() + 5),
            (std::vector<double>{0, 0, 1}));
  try {
    EncodeCovariates(Row("e", "forty", "2", "F", "white"), schema, stats);
    FAIL() << "expected SchemaError";
  } catch (const SchemaError& e) {
    EXPECT_NE(std::string(e.what()).find("age"), std::string::npos);
  }
}

TEST(EncodeTest, EveryBlockSumsToOne) {
  synth::SynthConfig c;
  c.num_images = 300;
  testing::TempDir dir("clinical");
  const auto ds = synth::GenerateDataset(c, dir.path());
  const auto schema = synth::SynthSchema();
  const auto rows = LoadCovariateCsv(dir.Sub("covariates.csv"), schema);
  ASSERT_EQ(rows.size(), 300u);
  const auto stats = FitStandardizer(rows, schema);
  for (const auto& r : rows) {
    const auto v = EncodeCovariates(r, schema, stats);
    ASSERT_EQ(v.size(), EncodedSize(schema, stats));
    std::size_t at = stats.names.size();
    for (const auto& cat : schema.categorical) {
      double sum = 0;
      for (std::size_t i = 0; i <= cat.levels.size(); ++i) sum += v[at + i];
      EXPECT_EQ(sum, 1.0) << cat.name;
      at += cat.levels.size() + 1;
    }
  }
}

struct Problem {
  Eigen::MatrixXd x;
  Eigen::VectorXd y;
};

Problem RandomProblem(std::uint64_t seed, int n, int d) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> g(0, 1);
  Problem p{Eigen::MatrixXd(n, d), Eigen::VectorXd(n)};
  for (int i = 0; i < n; ++i) {
    double s = 0;
    for (int j = 0; j < d; ++j) {
      p.x(i, j) = g(rng);
      s += p.x(i, j) * (j % 2 ? -0.7 : 1.1);
    }
    p.y(i) = s + g(rng) > 0 ? 1 : 0;
  }
  return p;
}

TEST(LogisticTest, GradientMatchesCentralDifferences) {
  std::mt19937_64 rng(8);
  std::normal_distribution<double> g(0, 1);
  for (int trial = 0; trial < 20; ++trial) {
    const auto p = RandomProblem(100 + trial, 40, 5);
    Eigen::VectorXd w(5);
    for (auto& v : w) v = g(rng);
    const double b = g(rng);
    Eigen::VectorXd gw;
    double gb;
    LogisticGradient(p.x, p.y, w, b, 1.0, &gw, &gb);
    const double h = 1e-5;
    for (int j = 0; j < 5; ++j) {
      Eigen::VectorXd wp = w, wm = w;
      wp(j) += h;
      wm(j) -= h;
      const double fd = (LogisticLoss(p.x, p.y, wp, b, 1.0) - LogisticLoss(p.x, p.y, wm, b, 1.0)) / (2 * h);
      EXPECT_LT(std::abs(fd - gw(j)), 1e-5);
    }
    const double fd_b = (LogisticLoss(p.x, p.y, w, b + h, 1.0) - LogisticLoss(p.x, p.y, w, b - h, 1.0)) / (2 * h);
    EXPECT_LT(std::abs(fd_b - gb), 1e-5);
  }
}

TEST(LogisticTest, LossIsConvexAlongSegments) {
  std::mt19937_64 rng(9);
  std::normal_distribution<double> g(0, 3);
  const auto p = RandomProblem(5, 60, 4);
  for (int trial = 0; trial < 500; ++trial) {
    Eigen::VectorXd a(4), c(4);
    for (int j = 0; j < 4; ++j) {
      a(j) = g(rng);
      c(j) = g(rng);
    }
    const double ba = g(rng), bc = g(rng);
    const double mid = LogisticLoss(p.x, p.y, (a + c) / 2, (ba + bc) / 2, 1.0);
    const double avg = (LogisticLoss(p.x, p.y, a, ba, 1.0) + LogisticLoss(p.x, p.y, c, bc, 1.0)) / 2;
    EXPECT_LE(mid, avg + 1e-12);
  }
}

TEST(LogisticTest, SeparableSignZeroStartAndConvergence) {
  Eigen::MatrixXd x(6, 1);
  x << -1, -1, -1, 1, 1, 1;
  Eigen::VectorXd y(6);
  y << 0, 0, 0, 1, 1, 1;
  LogisticModel zero;
  zero.weights = Eigen::VectorXd::Zero(1);
  EXPECT_EQ(zero.Predict(Eigen::VectorXd::Constant(1, 0.3)), 0.5);
  const auto m = TrainLogistic(x, y);
  EXPECT_TRUE(m.converged);
  EXPECT_GT(m.weights(0), 0);
  Eigen::VectorXd gw;
  double gb;
  LogisticGradient(x, y, m.weights, m.intercept, 1.0, &gw, &gb);
  EXPECT_LT(std::sqrt(gw.squaredNorm() + gb * gb), 1e-8);
  const auto again = TrainLogistic(x, y);
  EXPECT_EQ(again.weights(0), m.weights(0));
  EXPECT_EQ(again.intercept, m.intercept);
  EXPECT_THROW(TrainLogistic(x, Eigen::VectorXd::Ones(6)), DataError);
}

TEST(LogisticTest, JsonRoundTrip) {
  const auto p = RandomProblem(3, 80, 3);
  const auto m = TrainLogistic(p.x, p.y);
  const auto back = LogisticModel::FromJson(m.ToJson());
  EXPECT_EQ(back.intercept, m.intercept);
  for (int i = 0; i < p.x.rows(); ++i) {
    EXPECT_EQ(back.Predict(Eigen::VectorXd(p.x.row(i).transpose())),
              m.Predict(Eigen::VectorXd(p.x.row(i).transpose())));
  }
}

class CombinedTest : public ::testing::Test {
 protected:
  static void SetUpTestSuite() {
    dir_ = new testing::TempDir("combined");
    synth::SynthConfig c;
    c.num_images = 300;
    c.seed = 12;
    c.covariate_strength = 3.0;
    auto ds = synth::GenerateDataset(c, dir_->path());
    manifest_ = new DatasetManifest(PatientSplit(ds.manifest, {0.7, 0.3}, 2));
    rows_ = new std::vector<CovariateRow>(ds.covariates);
    classify::ClassifierTrainConfig bc;
    bc.crop_side = 64;
    backbone_ = std::make_shared<const classify::ClassifierModel>(bc, classify::InputKind::kRoiCrop);
  }
  static void TearDownTestSuite() {
    backbone_.reset();
    delete rows_;
    delete manifest_;
    delete dir_;
  }
  static testing::TempDir* dir_;
  static DatasetManifest* manifest_;
  static std::vector<CovariateRow>* rows_;
  static std::shared_ptr<const classify::ClassifierModel> backbone_;
};

testing::TempDir* CombinedTest::dir_ = nullptr;
DatasetManifest* CombinedTest::manifest_ = nullptr;
std::vector<CovariateRow>* CombinedTest::rows_ = nullptr;
std::shared_ptr<const classify::ClassifierModel> CombinedTest::backbone_;

TEST_F(CombinedTest, DefaultsFollowRecipe) {
  const auto c = CombinedDefaults();
  EXPECT_EQ(c.epochs, 30);
  EXPECT_EQ(c.batch_size, 64);
  EXPECT_DOUBLE_EQ(c.base_lr, 0.001);
  EXPECT_DOUBLE_EQ(c.momentum, 0.9);
  EXPECT_DOUBLE_EQ(c.weight_decay, 1e-4);
}

TEST_F(CombinedTest, OnlyFusedLayerTrainsAndBackboneIsFrozen) {
  const auto& rec = manifest_->records[0];
  const Image img = LoadImage(manifest_->ResolvePath(rec));
  const auto before = backbone_->Features(backbone_->PrepareWhole(img));
  const auto model = TrainCombined(backbone_, *manifest_, *rows_, synth::SynthSchema());
  EXPECT_EQ(model.trainable_params(), model.fused().weight.value.size() + model.fused().bias.value.size());
  EXPECT_EQ(model.trainable_params(),
            std::size_t(backbone_->feature_size()) + EncodedSize(model.schema(), model.stats()) + 1);
  EXPECT_EQ(model.num_params(), backbone_->num_params() + model.trainable_params());
  EXPECT_EQ(backbone_->Features(backbone_->PrepareWhole(img)), before);
  EXPECT_EQ(model.ImageFeatures(img), before);
  EXPECT_EQ(model.curves().size(), 30u);
}

TEST_F(CombinedTest, FusedLayerIsLinearInCovariates) {
  const auto model = TrainCombined(backbone_, *manifest_, *rows_, synth::SynthSchema());
  const auto& w = model.fused().weight.value;
  const int f = backbone_->feature_size();
  for (int i = 0; i < 10; ++i) {
    const auto& rec = manifest_->records[i];
    const Image img = LoadImage(manifest_->ResolvePath(rec));
    const auto feats = model.ImageFeatures(img);
    const auto cov = model.Covariates((*rows_)[i]);
    double dropped = 0;
    for (std::size_t j = 0; j < cov.size(); ++j) dropped += double(w[f + j]) * cov[j];
    const double full = model.FusedLogit(feats, cov);
    const double zeroed = model.FusedLogit(feats, std::vector<double>(cov.size(), 0.0));
    EXPECT_NEAR(full - zeroed, dropped, 1e-9);
    const double p = model.Predict(img, (*rows_)[i]);
    EXPECT_GT(p, 0);
    EXPECT_LT(p, 1);
    EXPECT_EQ(p, model.Predict(img, (*rows_)[i]));
    EXPECT_NEAR(p, 1 / (1 + std::exp(-full)), 1e-12);
  }
}

TEST_F(CombinedTest, CovariateSeparableClassesMatchLogistic) {
  const auto schema = synth::SynthSchema();
  const auto combined = TrainCombined(backbone_, *manifest_, *rows_, schema);
  const auto logistic = TrainClinical(*manifest_, *rows_, schema);
  std::vector<metrics::ScoredLabel> c_pairs, l_pairs;
  for (std::size_t i = 0; i < manifest_->records.size(); ++i) {
    const auto& rec = manifest_->records[i];
    if (manifest_->splits.at(rec.image_id) != Split::kVal) continue;
    const Image img = LoadImage(manifest_->ResolvePath(rec));
    c_pairs.push_back({combined.Predict(img, (*rows_)[i]), rec.ImageLabel()});
    l_pairs.push_back({logistic.Predict((*rows_)[i]), rec.ImageLabel()});
  }
  const double c_auc = metrics::Auc(c_pairs), l_auc = metrics::Auc(l_pairs);
  EXPECT_GE(c_auc, l_auc - 0.02) << "combined " << c_auc << " logistic " << l_auc;
}

TEST_F(CombinedTest, MissingRowsAreExcludedAndAllMissingIsFatal) {
  std::vector<CovariateRow> half(rows_->begin(), rows_->begin() + 150);
  EXPECT_NO_THROW(TrainCombined(backbone_, *manifest_, half, synth::SynthSchema()));
  EXPECT_THROW(TrainCombined(backbone_, *manifest_, {}, synth::SynthSchema()), DataError);
}

TEST_F(CombinedTest, SaveLoadRoundTrip) {
  const auto model = TrainCombined(backbone_, *manifest_, *rows_, synth::SynthSchema());
  model.Save(dir_->Sub("combined_ckpt"));
  const auto loaded = CombinedModel::Load(dir_->Sub("combined_ckpt"));
  const Image img = LoadImage(manifest_->ResolvePath(manifest_->records[3]));
  EXPECT_EQ(loaded.Predict(img, (*rows_)[3]), model.Predict(img, (*rows_)[3]));
}

TEST(ClinicalModelTest, SaveLoadRoundTrip) {
  testing::TempDir dir("clinical");
  synth::SynthConfig c;
  c.num_images = 120;
  const auto ds = synth::GenerateDataset(c, dir.Sub("data"));
  const auto model = TrainClinical(ds.manifest, ds.covariates, synth::SynthSchema());
  model.Save(dir.Sub("ckpt"));
  const auto loaded = ClinicalModel::Load(dir.Sub("ckpt"));
  for (const auto& r : ds.covariates) EXPECT_EQ(loaded.Predict(r), model.Predict(r));
}

}  // namespace
}  // namespace dermtriage::clinical
