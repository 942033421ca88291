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

#ifndef DERMTRIAGE_COMBINED_H_
#define DERMTRIAGE_COMBINED_H_

#include <memory>
#include <string>
#include <vector>

#include "dermtriage/classifier.h"
#include "dermtriage/covariates.h"
#include "dermtriage/manifest.h"
#include "dermtriage/nn.h"

namespace dermtriage::clinical {

// 30 epochs, batch 64, lr 0.001, momentum 0.9, weight decay 1e-4.
classify::ClassifierTrainConfig CombinedDefaults();

// Frozen classifier backbone; its pooled features are concatenated with the
// encoded covariates and fed to one sigmoid unit.
class CombinedModel {
 public:
  CombinedModel(std::shared_ptr<const classify::ClassifierModel> backbone,
                CovariateSchema schema, StandardizationStats stats,
                classify::ClassifierTrainConfig config);

  const classify::ClassifierModel& backbone() const { return *backbone_; }
  const CovariateSchema& schema() const { return schema_; }
  const StandardizationStats& stats() const { return stats_; }
  const classify::ClassifierTrainConfig& config() const { return config_; }
  const std::vector<classify::EpochLog>& curves() const { return curves_; }

  std::vector<float> ImageFeatures(const Image& image) const;
  std::vector<double> Covariates(const CovariateRow& row) const;
  // Logit of the fused layer on precomputed parts.
  double FusedLogit(const std::vector<float>& image_features,
                    const std::vector<double>& covariates) const;
  double Predict(const Image& image, const CovariateRow& row) const;

  // Weights of the fused layer: image-feature part then covariate part.
  const nn::Linear& fused() const { return fused_; }
  std::size_t trainable_params() const;
  std::size_t num_params() const;

  void Save(const std::string& dir) const;
  static CombinedModel Load(const std::string& dir);

 private:
  friend class CombinedTrainer;
  std::shared_ptr<const classify::ClassifierModel> backbone_;
  CovariateSchema schema_;
  StandardizationStats stats_;
  classify::ClassifierTrainConfig config_;
  nn::Linear fused_;
  std::vector<classify::EpochLog> curves_;
};

// Trains the fused layer on the train split. Images without a covariate row
// are skipped with a warning; DataError when none remain. Standardization
// statistics come from the covariate rows of the kept training images.
CombinedModel TrainCombined(std::shared_ptr<const classify::ClassifierModel> backbone,
                            const DatasetManifest& manifest,
                            const std::vector<CovariateRow>& rows,
                            const CovariateSchema& schema,
                            const classify::ClassifierTrainConfig& config = CombinedDefaults());

}  // namespace dermtriage::clinical

#endif  // DERMTRIAGE_COMBINED_H_
