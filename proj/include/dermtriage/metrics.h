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

#ifndef DERMTRIAGE_METRICS_H_
#define DERMTRIAGE_METRICS_H_

#include <map>
#include <string>
#include <vector>

#include "dermtriage/roi.h"

namespace dermtriage::metrics {

struct ScoredLabel {
  double score;
  int label;  // 0 or 1
};

// ROC AUC by the trapezoid rule over thresholds at the unique scores
// (predictions with score >= t are positive), anchored at (0,0) and (1,1).
// Throws UndefinedMetricError unless both classes are present.
double Auc(const std::vector<ScoredLabel>& pairs);

// Precision-recall area by the trapezoid rule over (TPR, PPV) points at the
// unique scores, anchored at (TPR=0, PPV=1). Throws UndefinedMetricError
// when there are no positives.
double AveragePrecision(const std::vector<ScoredLabel>& pairs);

// AveragePrecision for a ranking whose positive count is fixed externally
// (detections that miss some ground truths entirely).
double AveragePrecision(const std::vector<ScoredLabel>& pairs, int total_positives);

// Intersection over union of the corner forms; 0 for disjoint boxes.
double Iou(const Roi& a, const Roi& b);

struct ScoredBox {
  Roi box;
  double score;
};

struct MatchResult {
  // Per prediction, in input order.
  std::vector<bool> is_tp;
  std::vector<int> matched_gt;     // -1 for false positives
  std::vector<double> match_iou;   // IoU with the claimed ground truth
  // Per ground truth, in input order.
  std::vector<bool> gt_matched;

  int tp_count() const;
  int fp_count() const;
};

// Predictions in descending score order (stable for ties) each claim the
// still-unmatched ground truth of highest IoU when that IoU >= threshold;
// IoU ties go to the earlier ground truth.
MatchResult MatchDetections(const std::vector<ScoredBox>& predictions,
                            const std::vector<Roi>& ground_truths,
                            double iou_threshold);

struct ImageBoxes {
  std::vector<ScoredBox> predictions;
  std::vector<Roi> ground_truths;
};

// Class-agnostic AP of the pooled detections at one IoU threshold.
double MapAt(const std::vector<ImageBoxes>& images, double iou_threshold);

struct MapSummary {
  std::map<double, double> per_threshold;
  double map50 = 0;
  double map75 = 0;
  double map50_95 = 0;  // mean over 0.50, 0.55, ..., 0.95
};
MapSummary ComputeMap(const std::vector<ImageBoxes>& images);

// Fraction of ground truths overlapped (IoU > 0) by at least one prediction.
double RecallAnyOverlap(const std::vector<ImageBoxes>& images);

// Best IoU of each ground truth against the predictions of its image,
// keeping only overlapping pairs (IoU > 0).
std::vector<double> BestMatchIous(const std::vector<ImageBoxes>& images);

struct IouSummary {
  double median;
  double q1;
  double q3;
};

// Quantiles by linear interpolation between order statistics.
double Quantile(std::vector<double> values, double q);
IouSummary SummarizeIou(const std::vector<double>& ious);

}  // namespace dermtriage::metrics

#endif  // DERMTRIAGE_METRICS_H_
