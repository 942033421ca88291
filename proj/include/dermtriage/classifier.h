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

#ifndef DERMTRIAGE_CLASSIFIER_H_
#define DERMTRIAGE_CLASSIFIER_H_

#include <cstdint>
#include <memory>
#include <string>
#include <vector>

#include <json.hpp>

#include "dermtriage/image.h"
#include "dermtriage/manifest.h"
#include "dermtriage/roi.h"

namespace dermtriage::classify {

struct ClassifierTrainConfig {
  int epochs = 100;
  int batch_size = 64;
  double base_lr = 0.01;
  double momentum = 0.9;
  double weight_decay = 1e-4;
  int crop_side = 224;
  // Random horizontal and vertical flips during training.
  bool flip_augment = true;
  std::uint64_t seed = 1;

  void Validate() const;
  // Scales the epoch count by `factor` (at least one epoch).
  ClassifierTrainConfig Scaled(double factor) const;
  nlohmann::json ToJson() const;
  static ClassifierTrainConfig FromJson(const nlohmann::json& j);
};

// Half-period cosine decay: base * (0.5 + 0.5 cos(pi t / t_max)).
// Throws ConfigError unless 0 <= t <= t_max and t_max > 0.
double CosineLr(long t, long t_max, double base);

struct MalignancyScore {
  double probability;
  Roi roi;
  std::string image_id;
};

struct EpochLog {
  int epoch;
  double loss;
  double val_auc;  // NaN when no validation data or one class
};

enum class InputKind { kRoiCrop, kWholeImage };

// Convolutional backbone, global average pooling and one sigmoid unit.
class ClassifierModel {
 public:
  ClassifierModel(ClassifierTrainConfig config, InputKind kind);
  ~ClassifierModel();
  ClassifierModel(ClassifierModel&&) noexcept;
  ClassifierModel& operator=(ClassifierModel&&) noexcept;

  const ClassifierTrainConfig& config() const { return config_; }
  InputKind input_kind() const { return kind_; }

  // Network input for an ROI (square crop) or a whole image (resized).
  Image PrepareRoi(const Image& image, const Roi& roi) const;
  Image PrepareWhole(const Image& image) const;

  // Pooled backbone activations for a prepared side x side input.
  std::vector<float> Features(const Image& input) const;
  int feature_size() const;
  double Logit(const std::vector<float>& features) const;
  double PredictPrepared(const Image& input) const;

  MalignancyScore PredictRoi(const Image& image, const Roi& roi,
                             const std::string& image_id = "") const;
  double PredictImage(const Image& image) const;

  const std::vector<EpochLog>& curves() const { return curves_; }

  void Save(const std::string& dir) const;
  static ClassifierModel Load(const std::string& dir);

  std::size_t num_params() const;

 private:
  friend class ClassifierTrainer;
  struct Net;
  ClassifierTrainConfig config_;
  InputKind kind_;
  std::unique_ptr<Net> net_;
  std::vector<EpochLog> curves_;
};

struct LabeledInput {
  Image input;  // side x side
  int label;
};

// Shared SGD loop: batches of `batch_size`, half-period cosine decay over
// all steps, binary cross-entropy on the sigmoid output.
ClassifierModel TrainOnInputs(const std::vector<LabeledInput>& train,
                              const std::vector<LabeledInput>& val,
                              const ClassifierTrainConfig& config, InputKind kind);

// ROI crops of the train split labelled by malignancy of the ROI label;
// the val split supplies per-epoch AUC. Throws DataError when the training
// crops are all of one class.
ClassifierModel TrainClassifier(const DatasetManifest& manifest,
                                const ClassifierTrainConfig& config);

// Whole images of the train split with image-level labels.
ClassifierModel TrainDirect(const DatasetManifest& manifest,
                            const ClassifierTrainConfig& config);

}  // namespace dermtriage::classify

#endif  // DERMTRIAGE_CLASSIFIER_H_
