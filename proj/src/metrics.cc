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

#include "dermtriage/metrics.h"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "dermtriage/error.h"

namespace dermtriage::metrics {
namespace {

struct SweepPoint {
  int tp;
  int fp;
};

// Cumulative (tp, fp) after admitting every prediction with score >= t, for
// each unique score t in descending order.
std::vector<SweepPoint> Sweep(const std::vector<ScoredLabel>& pairs) {
  std::vector<std::size_t> order(pairs.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return pairs[a].score > pairs[b].score;
  });
  std::vector<SweepPoint> points;
  int tp = 0, fp = 0;
  for (std::size_t i = 0; i < order.size(); ++i) {
    const auto& p = pairs[order[i]];
    if (!std::isfinite(p.score)) throw DataError("non-finite score");
    (p.label ? tp : fp) += 1;
    const bool last_of_group =
        i + 1 == order.size() || pairs[order[i + 1]].score != p.score;
    if (last_of_group) points.push_back({tp, fp});
  }
  return points;
}

}  // namespace

double Auc(const std::vector<ScoredLabel>& pairs) {
  int pos = 0, neg = 0;
  for (const auto& p : pairs) (p.label ? pos : neg) += 1;
  if (pos == 0 || neg == 0) {
    throw UndefinedMetricError("AUC needs both positive and negative labels");
  }
  double area = 0, prev_fpr = 0, prev_tpr = 0;
  for (const auto& pt : Sweep(pairs)) {
    const double fpr = double(pt.fp) / neg, tpr = double(pt.tp) / pos;
    area += 0.5 * (fpr - prev_fpr) * (tpr + prev_tpr);
    prev_fpr = fpr;
    prev_tpr = tpr;
  }
  return area;
}

double AveragePrecision(const std::vector<ScoredLabel>& pairs, int total_positives) {
  if (total_positives <= 0) {
    throw UndefinedMetricError("average precision needs at least one positive");
  }
  double area = 0, prev_tpr = 0, prev_ppv = 1;
  for (const auto& pt : Sweep(pairs)) {
    const double tpr = double(pt.tp) / total_positives;
    const double ppv = double(pt.tp) / (pt.tp + pt.fp);
    area += 0.5 * (tpr - prev_tpr) * (ppv + prev_ppv);
    prev_tpr = tpr;
    prev_ppv = ppv;
  }
  return area;
}

double AveragePrecision(const std::vector<ScoredLabel>& pairs) {
  int pos = 0;
  for (const auto& p : pairs) pos += p.label ? 1 : 0;
  return AveragePrecision(pairs, pos);
}

double Iou(const Roi& a, const Roi& b) {
  const Box ba = a.Corners(), bb = b.Corners();
  const double inter = Intersect(ba, bb).Area();
  if (inter <= 0) return 0.0;
  return inter / (ba.Area() + bb.Area() - inter);
}

int MatchResult::tp_count() const {
  return int(std::count(is_tp.begin(), is_tp.end(), true));
}

int MatchResult::fp_count() const { return int(is_tp.size()) - tp_count(); }

MatchResult MatchDetections(const std::vector<ScoredBox>& predictions,
                            const std::vector<Roi>& ground_truths,
                            double iou_threshold) {
  MatchResult r;
  r.is_tp.assign(predictions.size(), false);
  r.matched_gt.assign(predictions.size(), -1);
  r.match_iou.assign(predictions.size(), 0.0);
  r.gt_matched.assign(ground_truths.size(), false);
  std::vector<std::size_t> order(predictions.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return predictions[a].score > predictions[b].score;
  });
  for (std::size_t i : order) {
    int best = -1;
    double best_iou = -1;
    for (std::size_t g = 0; g < ground_truths.size(); ++g) {
      if (r.gt_matched[g]) continue;
      const double v = Iou(predictions[i].box, ground_truths[g]);
      if (v > best_iou) {
        best_iou = v;
        best = int(g);
      }
    }
    if (best >= 0 && best_iou >= iou_threshold) {
      r.is_tp[i] = true;
      r.matched_gt[i] = best;
      r.match_iou[i] = best_iou;
      r.gt_matched[best] = true;
    }
  }
  return r;
}

double MapAt(const std::vector<ImageBoxes>& images, double iou_threshold) {
  int total_gt = 0;
  std::vector<ScoredLabel> pooled;
  for (const auto& img : images) {
    total_gt += int(img.ground_truths.size());
    const MatchResult m = MatchDetections(img.predictions, img.ground_truths, iou_threshold);
    for (std::size_t i = 0; i < img.predictions.size(); ++i) {
      pooled.push_back({img.predictions[i].score, m.is_tp[i] ? 1 : 0});
    }
  }
  if (total_gt == 0) throw UndefinedMetricError("mAP needs at least one ground truth");
  return AveragePrecision(pooled, total_gt);
}

MapSummary ComputeMap(const std::vector<ImageBoxes>& images) {
  MapSummary s;
  double sum = 0;
  for (int k = 0; k < 10; ++k) {
    const double t = 0.5 + 0.05 * k;
    const double v = MapAt(images, t);
    s.per_threshold[t] = v;
    sum += v;
  }
  s.map50 = s.per_threshold.begin()->second;
  s.map75 = MapAt(images, 0.75);
  s.map50_95 = sum / 10;
  return s;
}

double RecallAnyOverlap(const std::vector<ImageBoxes>& images) {
  int total = 0, hit = 0;
  for (const auto& img : images) {
    for (const auto& gt : img.ground_truths) {
      ++total;
      for (const auto& p : img.predictions) {
        if (Iou(p.box, gt) > 0) {
          ++hit;
          break;
        }
      }
    }
  }
  if (total == 0) throw UndefinedMetricError("recall needs at least one ground truth");
  return double(hit) / total;
}

std::vector<double> BestMatchIous(const std::vector<ImageBoxes>& images) {
  std::vector<double> out;
  for (const auto& img : images) {
    for (const auto& gt : img.ground_truths) {
      double best = 0;
      for (const auto& p : img.predictions) best = std::max(best, Iou(p.box, gt));
      if (best > 0) out.push_back(best);
    }
  }
  return out;
}

double Quantile(std::vector<double> values, double q) {
  if (values.empty()) throw UndefinedMetricError("quantile of an empty set");
  std::sort(values.begin(), values.end());
  const double pos = q * double(values.size() - 1);
  const std::size_t lo = std::size_t(std::floor(pos));
  const std::size_t hi = std::min(lo + 1, values.size() - 1);
  return values[lo] + (pos - double(lo)) * (values[hi] - values[lo]);
}

IouSummary SummarizeIou(const std::vector<double>& ious) {
  if (ious.empty()) throw UndefinedMetricError("no overlapping predictions to summarize");
  return {Quantile(ious, 0.5), Quantile(ious, 0.25), Quantile(ious, 0.75)};
}

}  // namespace dermtriage::metrics
