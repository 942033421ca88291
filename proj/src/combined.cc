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

#include "dermtriage/combined.h"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <limits>
#include <map>
#include <numeric>
#include <random>

#include <json.hpp>
#include <spdlog/spdlog.h>

#include "dermtriage/error.h"
#include "dermtriage/metrics.h"

namespace dermtriage::clinical {
namespace fs = std::filesystem;
using classify::ClassifierModel;
using classify::ClassifierTrainConfig;
using nlohmann::json;

ClassifierTrainConfig CombinedDefaults() {
  ClassifierTrainConfig c;
  c.epochs = 30;
  c.batch_size = 64;
  c.base_lr = 0.001;
  c.momentum = 0.9;
  c.weight_decay = 1e-4;
  c.flip_augment = false;
  return c;
}

CombinedModel::CombinedModel(std::shared_ptr<const ClassifierModel> backbone,
                             CovariateSchema schema, StandardizationStats stats,
                             ClassifierTrainConfig config)
    : backbone_(std::move(backbone)),
      schema_(std::move(schema)),
      stats_(std::move(stats)),
      config_(std::move(config)) {
  if (!backbone_) throw ModelError("combined model needs a classifier backbone");
  config_.crop_side = backbone_->config().crop_side;
  const int in = backbone_->feature_size() + int(EncodedSize(schema_, stats_));
  fused_ = nn::Linear("fused", in, 1);
}

std::vector<float> CombinedModel::ImageFeatures(const Image& image) const {
  return backbone_->Features(backbone_->PrepareWhole(image));
}

std::vector<double> CombinedModel::Covariates(const CovariateRow& row) const {
  return EncodeCovariates(row, schema_, stats_);
}

double CombinedModel::FusedLogit(const std::vector<float>& image_features,
                                 const std::vector<double>& covariates) const {
  if (int(image_features.size() + covariates.size()) != fused_.in_features()) {
    throw DataError("combined model input has the wrong length");
  }
  const auto& w = fused_.weight.value;
  double logit = fused_.bias.value[0];
  for (std::size_t i = 0; i < image_features.size(); ++i) logit += double(w[i]) * image_features[i];
  const std::size_t f = image_features.size();
  for (std::size_t j = 0; j < covariates.size(); ++j) logit += double(w[f + j]) * covariates[j];
  return logit;
}

double CombinedModel::Predict(const Image& image, const CovariateRow& row) const {
  return nn::Sigmoid(FusedLogit(ImageFeatures(image), Covariates(row)));
}

std::size_t CombinedModel::trainable_params() const {
  return fused_.weight.size() + fused_.bias.size();
}

std::size_t CombinedModel::num_params() const {
  return backbone_->num_params() + trainable_params();
}

void CombinedModel::Save(const std::string& dir) const {
  fs::create_directories(dir);
  backbone_->Save((fs::path(dir) / "backbone").string());
  nn::WriteParams({&fused_.weight, &fused_.bias}, (fs::path(dir) / "fused.bin").string());
  json meta = {{"type", "combined"},
               {"schema", schema_.ToJson()},
               {"standardization", stats_.ToJson()},
               {"config", config_.ToJson()},
               {"image_features", backbone_->feature_size()},
               {"covariate_features", EncodedSize(schema_, stats_)}};
  std::ofstream((fs::path(dir) / "model.json").string()) << meta.dump(2) << "\n";
  std::ofstream curves((fs::path(dir) / "curves.csv").string());
  curves << "epoch,loss,val_auc\n";
  for (const auto& e : curves_) {
    curves << e.epoch << ',' << e.loss << ',';
    if (!std::isnan(e.val_auc)) curves << e.val_auc;
    curves << '\n';
  }
}

CombinedModel CombinedModel::Load(const std::string& dir) {
  std::ifstream in((fs::path(dir) / "model.json").string());
  if (!in) throw ModelError("no combined checkpoint in '" + dir + "'");
  json meta;
  try {
    meta = json::parse(in);
  } catch (const json::parse_error& e) {
    throw ModelError(std::string("combined metadata: ") + e.what());
  }
  if (meta.value("type", "") != "combined") throw ModelError("'" + dir + "' is not a combined model");
  auto backbone = std::make_shared<const ClassifierModel>(
      ClassifierModel::Load((fs::path(dir) / "backbone").string()));
  CombinedModel m(std::move(backbone), CovariateSchema::FromJson(meta.at("schema")),
                  StandardizationStats::FromJson(meta.at("standardization")),
                  ClassifierTrainConfig::FromJson(meta.at("config")));
  nn::ReadParams({&m.fused_.weight, &m.fused_.bias}, (fs::path(dir) / "fused.bin").string());
  return m;
}

class CombinedTrainer {
 public:
  struct Sample {
    std::vector<float> x;
    int label;
  };

  static CombinedModel Train(std::shared_ptr<const ClassifierModel> backbone,
                             const DatasetManifest& manifest,
                             const std::vector<CovariateRow>& rows,
                             const CovariateSchema& schema, const ClassifierTrainConfig& cfg) {
    cfg.Validate();
    schema.Validate();
    std::map<std::string, const CovariateRow*> by_id;
    for (const auto& r : rows) by_id[r.image_id] = &r;

    auto records = manifest.splits.empty() ? AllRecords(manifest)
                                           : manifest.InSplit(Split::kTrain);
    std::vector<const ImageRecord*> kept;
    std::vector<CovariateRow> train_rows;
    int missing = 0;
    for (const auto* r : records) {
      auto it = by_id.find(r->image_id);
      if (it == by_id.end()) {
        ++missing;
        continue;
      }
      kept.push_back(r);
      train_rows.push_back(*it->second);
    }
    if (missing > 0) {
      spdlog::warn("{} training images have no covariate row and were excluded", missing);
    }
    if (kept.empty()) throw DataError("no training image has a covariate row");

    CombinedModel model(backbone, schema, FitStandardizer(train_rows, schema), cfg);
    const auto train = Encode(model, manifest, kept, by_id);
    std::vector<Sample> val;
    std::vector<const ImageRecord*> val_records;
    for (const auto* r : manifest.InSplit(Split::kVal)) {
      if (by_id.count(r->image_id)) val_records.push_back(r);
    }
    val = Encode(model, manifest, val_records, by_id);

    int positives = 0;
    for (const auto& s : train) positives += s.label;
    if (positives == 0 || positives == int(train.size())) {
      throw DataError("combined training set must contain both classes");
    }

    // Start from the classifier head for the image part, zero for covariates.
    nn::Linear& fused = model.fused_;
    std::fill(fused.weight.value.begin(), fused.weight.value.end(), 0.f);
    const auto backbone_params = BackboneHead(*backbone);
    std::copy(backbone_params.first.begin(), backbone_params.first.end(),
              fused.weight.value.begin());
    fused.bias.value[0] = backbone_params.second;

    const std::vector<nn::Param*> params = {&fused.weight, &fused.bias};
    const nn::SgdConfig sgd{cfg.momentum, cfg.weight_decay};
    std::mt19937_64 rng(cfg.seed + 3);
    std::vector<std::size_t> order(train.size());
    std::iota(order.begin(), order.end(), 0);
    const long per_epoch = long((train.size() + cfg.batch_size - 1) / cfg.batch_size);
    const long total = per_epoch * cfg.epochs;
    long step = 0;
    for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
      std::shuffle(order.begin(), order.end(), rng);
      double epoch_loss = 0;
      for (std::size_t start = 0; start < order.size(); start += cfg.batch_size) {
        const std::size_t end = std::min(order.size(), start + cfg.batch_size);
        const double n = double(end - start);
        for (std::size_t k = start; k < end; ++k) {
          const Sample& s = train[order[k]];
          const double logit = fused.Forward(s.x)[0];
          epoch_loss += std::max(logit, 0.0) - logit * s.label +
                        std::log1p(std::exp(-std::abs(logit)));
          fused.Backward(s.x, {float((nn::Sigmoid(logit) - s.label) / n)});
        }
        nn::SgdStep(params, classify::CosineLr(step, total, cfg.base_lr), sgd);
        ++step;
      }
      classify::EpochLog log{epoch, epoch_loss / double(train.size()),
                             std::numeric_limits<double>::quiet_NaN()};
      if (!val.empty()) {
        std::vector<metrics::ScoredLabel> pairs;
        for (const auto& v : val) pairs.push_back({nn::Sigmoid(fused.Forward(v.x)[0]), v.label});
        try {
          log.val_auc = metrics::Auc(pairs);
        } catch (const UndefinedMetricError&) {
        }
      }
      spdlog::info("combined epoch {}/{} loss {:.4f} val_auc {}", epoch + 1, cfg.epochs, log.loss,
                   std::isnan(log.val_auc) ? "n/a" : fmt::format("{:.4f}", log.val_auc));
      model.curves_.push_back(log);
    }
    return model;
  }

 private:
  static std::vector<const ImageRecord*> AllRecords(const DatasetManifest& m) {
    std::vector<const ImageRecord*> out;
    for (const auto& r : m.records) out.push_back(&r);
    return out;
  }

  static std::vector<Sample> Encode(const CombinedModel& model, const DatasetManifest& manifest,
                                    const std::vector<const ImageRecord*>& records,
                                    const std::map<std::string, const CovariateRow*>& by_id) {
    std::vector<Sample> out;
    for (const auto* r : records) {
      Sample s;
      s.x = model.ImageFeatures(LoadImage(manifest.ResolvePath(*r)));
      for (double v : model.Covariates(*by_id.at(r->image_id))) s.x.push_back(float(v));
      s.label = r->ImageLabel();
      out.push_back(std::move(s));
    }
    return out;
  }

  // Recovers the classifier's final-layer weights by probing its logit with
  // unit feature vectors.
  static std::pair<std::vector<float>, float> BackboneHead(const ClassifierModel& c) {
    const int f = c.feature_size();
    std::vector<float> zero(f, 0.f);
    const double bias = c.Logit(zero);
    std::vector<float> w(f);
    for (int i = 0; i < f; ++i) {
      std::vector<float> e(f, 0.f);
      e[i] = 1.f;
      w[i] = float(c.Logit(e) - bias);
    }
    return {w, float(bias)};
  }
};

CombinedModel TrainCombined(std::shared_ptr<const ClassifierModel> backbone,
                            const DatasetManifest& manifest,
                            const std::vector<CovariateRow>& rows, const CovariateSchema& schema,
                            const ClassifierTrainConfig& config) {
  return CombinedTrainer::Train(std::move(backbone), manifest, rows, schema, config);
}

}  // namespace dermtriage::clinical
