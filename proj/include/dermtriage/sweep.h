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

#ifndef DERMTRIAGE_SWEEP_H_
#define DERMTRIAGE_SWEEP_H_

#include <map>
#include <optional>
#include <string>
#include <vector>

#include "dermtriage/image_scorer.h"
#include "dermtriage/manifest.h"

namespace dermtriage::scoring {

// Models for the strategy grid; null entries leave their rows unevaluated.
struct SweepModels {
  const detection::DetectorModel* one_class = nullptr;
  const classify::ClassifierModel* classifier = nullptr;
  const detection::DetectorModel* malignancy = nullptr;
  const detection::DetectorModel* subtype = nullptr;
  const classify::ClassifierModel* direct = nullptr;
};

struct SweepCell {
  StrategyKind strategy;
  AggregationKind aggregator;
  std::optional<double> auc;
  std::optional<double> ap;
  std::string status;  // "ok", "not evaluated: ...", "undefined: ..."
  std::vector<ImageScore> scores;
};

struct SweepResult {
  // Strategy-major, aggregators in kAllAggregations order: always 12 cells.
  std::vector<SweepCell> cells;
  // Detections per granularity name.
  std::map<std::string, std::vector<detection::Detection>> detections;

  const SweepCell& Cell(StrategyKind s, AggregationKind a) const;
  std::string ToCsv() const;
  std::string ToText() const;
};

// Scores `images` under every strategy and aggregator. Each detector runs
// once per image; the direct strategy has no aggregation, so its score fills
// all three aggregator cells.
SweepResult RunSweep(const DatasetManifest& manifest,
                     const std::vector<const ImageRecord*>& images,
                     const SweepModels& models, const ScorerOptions& options = {});

}  // namespace dermtriage::scoring

#endif  // DERMTRIAGE_SWEEP_H_
