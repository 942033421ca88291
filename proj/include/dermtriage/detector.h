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

#ifndef DERMTRIAGE_DETECTOR_H_
#define DERMTRIAGE_DETECTOR_H_

#include <cstdint>
#include <memory>
#include <string>
#include <vector>

#include <json.hpp>

#include "dermtriage/image.h"
#include "dermtriage/manifest.h"
#include "dermtriage/roi.h"

namespace dermtriage::detection {

enum class Granularity { kOneClass, kMalignancy, kSubType };

std::string GranularityName(Granularity g);
Granularity ParseGranularity(const std::string& s);

struct GranularityConfig {
  Granularity kind = Granularity::kOneClass;
  std::vector<std::string> class_names;

  static GranularityConfig Make(Granularity kind);
  int num_classes() const { return int(class_names.size()); }
  // Class index of a lesion label under this granularity.
  int ClassOf(LesionLabel label) const;
  // Indices of classes whose lesions are malignant (empty for one-class).
  std::vector<int> MalignantClasses() const;
};

struct Detection {
  Roi box;                          // unlabeled
  std::vector<double> class_probs;  // length C, softmax foreground terms
  double score = 0;                 // max(class_probs)
  std::string source_image_id;
  std::string model_id;
};

nlohmann::json DetectionToJson(const Detection& d);
Detection DetectionFromJson(const nlohmann::json& j);

struct DetectorTrainConfig {
  int total_steps = 80000;
  double base_lr = 0.001;
  double momentum = 0.9;
  double weight_decay = 1e-4;
  std::vector<int> decay_steps = {60000, 80000};
  double decay_factor = 0.1;
  // Anchors sampled per image per step for the classification/box losses.
  int rpn_batch = 512;
  double positive_fraction = 0.5;
  double nms_iou = 0.5;
  double score_threshold = 0.5;
  int max_detections = 100;
  // Backend settings (not part of the published recipe).
  int input_size = 128;
  double fg_iou = 0.5;
  double bg_iou = 0.4;
  bool flip_augment = true;
  std::uint64_t seed = 1;

  void Validate() const;
  // Scales total steps and decay breakpoints by `factor`; nothing else.
  DetectorTrainConfig Scaled(double factor) const;
  nlohmann::json ToJson() const;
  static DetectorTrainConfig FromJson(const nlohmann::json& j);
};

// Piecewise-constant schedule: base_lr times decay_factor for every
// breakpoint already reached.
double StepLr(const DetectorTrainConfig& config, int step);

// Greedy non-maximum suppression in descending score order; survivors
// pairwise overlap below `iou_threshold`. Ties keep input order.
std::vector<Detection> Nms(std::vector<Detection> detections, double iou_threshold);

class DetectorModel {
 public:
  DetectorModel(GranularityConfig granularity, DetectorTrainConfig config);
  ~DetectorModel();
  DetectorModel(DetectorModel&&) noexcept;
  DetectorModel& operator=(DetectorModel&&) noexcept;

  const GranularityConfig& granularity() const { return granularity_; }
  const DetectorTrainConfig& config() const { return config_; }
  const std::string& id() const { return id_; }

  // Post-processed detections in original image coordinates, sorted by
  // descending score.
  std::vector<Detection> Detect(const Image& image,
                                const std::string& image_id = "") const;
  // Detections before score filtering and NMS (all anchors).
  std::vector<Detection> RawDetections(const Image& image,
                                       const std::string& image_id = "") const;

  // Fixed-length pooled pyramid feature per detection. Throws ModelError
  // when a detection was not produced by this model.
  std::vector<std::vector<float>> ExportFeatures(
      const Image& image, const std::vector<Detection>& detections) const;
  int feature_size() const;

  void Save(const std::string& dir) const;
  static DetectorModel Load(const std::string& dir);

  std::size_t num_params() const;

 private:
  friend class DetectorTrainer;
  struct Net;
  void RefreshId();

  GranularityConfig granularity_;
  DetectorTrainConfig config_;
  std::unique_ptr<Net> net_;
  std::string id_;
  std::string training_log_;
};

struct TrainStepLog {
  int step;
  double lr;
  double loss;
  double cls_loss;
  double box_loss;
};

// Trains on the manifest's train split (every record when no split is
// assigned). Throws DataError before training when a ROI label cannot be
// resolved under the granularity, or when the split is empty.
DetectorModel TrainDetector(const DatasetManifest& manifest,
                            const GranularityConfig& granularity,
                            const DetectorTrainConfig& config,
                            std::vector<TrainStepLog>* log = nullptr);

void WriteDetectionsJsonl(const std::vector<Detection>& detections, std::ostream& out);
std::vector<Detection> ReadDetectionsJsonl(const std::string& path);

}  // namespace dermtriage::detection

#endif  // DERMTRIAGE_DETECTOR_H_
