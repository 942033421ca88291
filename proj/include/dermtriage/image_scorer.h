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

#ifndef DERMTRIAGE_IMAGE_SCORER_H_
#define DERMTRIAGE_IMAGE_SCORER_H_

#include <optional>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "dermtriage/classifier.h"
#include "dermtriage/detector.h"

namespace dermtriage::scoring {

enum class AggregationKind { kAverage, kMaximum, kNoisyOr };
enum class StrategyKind { kDirect, kTwoStage, kOneStepMalignancy, kOneStepSubtype };

inline constexpr AggregationKind kAllAggregations[] = {
    AggregationKind::kAverage, AggregationKind::kMaximum, AggregationKind::kNoisyOr};
inline constexpr StrategyKind kAllStrategies[] = {
    StrategyKind::kDirect, StrategyKind::kTwoStage, StrategyKind::kOneStepMalignancy,
    StrategyKind::kOneStepSubtype};

std::string AggregationName(AggregationKind k);
std::string StrategyName(StrategyKind k);
AggregationKind ParseAggregation(const std::string& s);
StrategyKind ParseStrategy(const std::string& s);

// kStandard is 1 - prod(1 - p_i). kAsPrinted reproduces the literal
// 1 - prod(p_i), which falls as lesions become more likely malignant.
enum class NoisyOrMode { kStandard, kAsPrinted };

// Throws DataError for an empty list or values outside (0, 1).
double Aggregate(std::span<const double> probs, AggregationKind kind,
                 NoisyOrMode mode = NoisyOrMode::kStandard);

struct ScorerOptions {
  NoisyOrMode noisy_or = NoisyOrMode::kStandard;
  // Image probability when the detector finds nothing.
  double empty_probability = 0.0;
};

struct Contribution {
  Roi roi;
  double probability;      // per-lesion malignancy
  double detection_score;  // detector confidence
};

struct ImageScore {
  std::string image_id;
  double probability = 0;
  StrategyKind strategy = StrategyKind::kTwoStage;
  std::optional<AggregationKind> aggregator;  // absent for direct
  std::vector<Contribution> contributing;
};

nlohmann::json ImageScoreToJson(const ImageScore& s);
ImageScore ImageScoreFromJson(const nlohmann::json& j);
std::vector<ImageScore> ReadScoresJsonl(const std::string& path);

// Aggregates per-lesion probabilities, applying the empty-detection policy.
ImageScore Summarize(const std::string& image_id, StrategyKind strategy,
                     AggregationKind aggregator, std::vector<Contribution> lesions,
                     const ScorerOptions& options = {});

// Malignancy of one detection from a malignancy or sub-type detector: the
// malignant-class probability (C=2) or the sum over malignant sub-types (C=8).
double OneStepLesionProbability(const detection::Detection& d,
                                const detection::GranularityConfig& granularity);

// Per-lesion malignancy of every detection of a one-class detector.
std::vector<Contribution> TwoStageLesions(const detection::DetectorModel& detector,
                                          const classify::ClassifierModel& classifier,
                                          const Image& image);
std::vector<Contribution> OneStepLesions(const detection::DetectorModel& detector,
                                         const Image& image);

ImageScore ScoreTwoStage(const detection::DetectorModel& detector,
                         const classify::ClassifierModel& classifier, const Image& image,
                         const std::string& image_id, AggregationKind aggregator,
                         const ScorerOptions& options = {});
ImageScore ScoreOneStep(const detection::DetectorModel& detector, const Image& image,
                        const std::string& image_id, AggregationKind aggregator,
                        const ScorerOptions& options = {});
ImageScore ScoreDirect(const classify::ClassifierModel& model, const Image& image,
                       const std::string& image_id);

}  // namespace dermtriage::scoring

#endif  // DERMTRIAGE_IMAGE_SCORER_H_
