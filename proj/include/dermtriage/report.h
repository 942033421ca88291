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

#ifndef DERMTRIAGE_REPORT_H_
#define DERMTRIAGE_REPORT_H_

#include <optional>
#include <set>
#include <string>
#include <vector>

#include "dermtriage/detector.h"
#include "dermtriage/image_scorer.h"
#include "dermtriage/manifest.h"

namespace dermtriage::metrics {

inline constexpr const char* kStrata[] = {"all", "smartphone", "dermoscopy"};
inline constexpr const char* kReportMetrics[] = {
    "auc", "ap", "map50", "map75", "map50_95", "recall_any_overlap",
    "iou_median", "iou_q1", "iou_q3"};

struct MetricValue {
  std::optional<double> value;
  // Why the value is missing: "empty", "undefined: ...", "not evaluated".
  std::string status;
};

struct StratumReport {
  std::string name;
  int scored_images = 0;
  int positives = 0;
  int detection_images = 0;
  int ground_truths = 0;
  std::vector<std::pair<std::string, MetricValue>> metrics;  // kReportMetrics order

  const MetricValue& Get(const std::string& metric) const;
};

struct EvalReport {
  std::vector<StratumReport> strata;  // kStrata order

  const StratumReport& Stratum(const std::string& name) const;
  // One row per stratum x metric.
  std::string ToCsv() const;
  std::string ToText() const;
  void Write(const std::string& dir) const;
};

// Image-level metrics over `scores`; detection metrics over `detection_images`
// using the manifest's ground truths (images without detections count as
// having none). Throws DataError for a score or detection whose image is
// missing from the manifest.
EvalReport StratifiedReport(const DatasetManifest& manifest,
                            const std::vector<scoring::ImageScore>& scores,
                            const std::vector<detection::Detection>& detections,
                            const std::set<std::string>& detection_images);

// Evaluates detections on the images they name plus every test-split image
// (every image when no split is assigned).
EvalReport StratifiedReport(const DatasetManifest& manifest,
                            const std::vector<scoring::ImageScore>& scores,
                            const std::vector<detection::Detection>& detections);

}  // namespace dermtriage::metrics

#endif  // DERMTRIAGE_REPORT_H_
