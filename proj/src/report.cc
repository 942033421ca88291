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

#include "dermtriage/report.h"

#include <cmath>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <sstream>

#include <fmt/format.h>

#include "dermtriage/error.h"
#include "dermtriage/metrics.h"

namespace dermtriage::metrics {
namespace {

bool InStratum(const ImageRecord& r, const std::string& stratum) {
  if (stratum == "all") return true;
  if (stratum == "smartphone") return r.capture == Capture::kWideField;
  return r.capture == Capture::kDermoscopy;
}

MetricValue Evaluate(const std::function<double()>& f) {
  try {
    return {f(), "ok"};
  } catch (const UndefinedMetricError& e) {
    return {std::nullopt, std::string("undefined: ") + e.what()};
  }
}

std::string Render(const MetricValue& v) {
  if (v.value) return fmt::format("{:.3f}", *v.value);
  if (v.status == "empty") return "empty";
  if (v.status == "not evaluated") return "-";
  return "undef";
}

}  // namespace

const MetricValue& StratumReport::Get(const std::string& metric) const {
  for (const auto& [name, v] : metrics) {
    if (name == metric) return v;
  }
  throw DataError("report has no metric '" + metric + "'");
}

const StratumReport& EvalReport::Stratum(const std::string& name) const {
  for (const auto& s : strata) {
    if (s.name == name) return s;
  }
  throw DataError("report has no stratum '" + name + "'");
}

std::string EvalReport::ToCsv() const {
  std::ostringstream out;
  out << "stratum,metric,value,status,n\n";
  for (const auto& s : strata) {
    for (const auto& [name, v] : s.metrics) {
      const bool image_level = name == "auc" || name == "ap";
      out << s.name << ',' << name << ',';
      if (v.value) out << fmt::format("{:.10g}", *v.value);
      std::string status = v.status;
      for (char& c : status) {
        if (c == ',' || c == '\n') c = ';';
      }
      out << ',' << status << ',' << (image_level ? s.scored_images : s.ground_truths) << '\n';
    }
  }
  return out.str();
}

std::string EvalReport::ToText() const {
  std::ostringstream out;
  auto header = [&](const std::string& title) {
    out << fmt::format("{:<28}", title);
    for (const auto& s : strata) out << fmt::format("{:>12}", s.name);
    out << '\n';
  };
  auto row = [&](const std::string& label, const std::string& metric) {
    out << fmt::format("{:<28}", label);
    for (const auto& s : strata) out << fmt::format("{:>12}", Render(s.Get(metric)));
    out << '\n';
  };
  auto count_row = [&](const std::string& label, auto field) {
    out << fmt::format("{:<28}", label);
    for (const auto& s : strata) out << fmt::format("{:>12}", s.*field);
    out << '\n';
  };
  header("Image-level malignancy");
  count_row("Images", &StratumReport::scored_images);
  count_row("Malignant images", &StratumReport::positives);
  row("AUC", "auc");
  row("AP", "ap");
  out << '\n';
  header("Lesion detection");
  count_row("Images", &StratumReport::detection_images);
  count_row("Ground-truth lesions", &StratumReport::ground_truths);
  row("mAP@0.5", "map50");
  row("mAP@0.75", "map75");
  row("mAP@[0.5,0.95]", "map50_95");
  row("Recall (IoU > 0)", "recall_any_overlap");
  row("IoU median", "iou_median");
  row("IoU Q1", "iou_q1");
  row("IoU Q3", "iou_q3");
  out << '\n'
      << "ROC curves are anchored at (0,0) and (1,1); PR curves at (TPR=0, PPV=1).\n"
      << "mAP@[0.5,0.95] averages thresholds 0.50, 0.55, ..., 0.95. IoU quartiles use\n"
      << "linear interpolation. 'empty' marks a stratum without images, 'undef' a\n"
      << "metric that is undefined on the stratum, '-' a metric not evaluated.\n";
  return out.str();
}

void EvalReport::Write(const std::string& dir) const {
  std::filesystem::create_directories(dir);
  std::ofstream(std::filesystem::path(dir) / "report.csv") << ToCsv();
  std::ofstream(std::filesystem::path(dir) / "report.txt") << ToText();
}

EvalReport StratifiedReport(const DatasetManifest& manifest,
                            const std::vector<scoring::ImageScore>& scores,
                            const std::vector<detection::Detection>& detections,
                            const std::set<std::string>& detection_images) {
  for (const auto& s : scores) {
    if (!manifest.Find(s.image_id)) {
      throw DataError("scored image '" + s.image_id + "' is not in the manifest");
    }
  }
  std::map<std::string, std::vector<ScoredBox>> predictions;
  for (const auto& d : detections) {
    if (!manifest.Find(d.source_image_id)) {
      throw DataError("detection image '" + d.source_image_id + "' is not in the manifest");
    }
    predictions[d.source_image_id].push_back({d.box, d.score});
  }
  for (const auto& id : detection_images) {
    if (!manifest.Find(id)) throw DataError("image '" + id + "' is not in the manifest");
  }

  EvalReport report;
  for (const char* stratum : kStrata) {
    StratumReport sr;
    sr.name = stratum;
    std::vector<ScoredLabel> pairs;
    for (const auto& s : scores) {
      const ImageRecord& r = *manifest.Find(s.image_id);
      if (!InStratum(r, sr.name)) continue;
      pairs.push_back({s.probability, r.ImageLabel()});
      sr.positives += r.ImageLabel();
    }
    sr.scored_images = int(pairs.size());
    std::vector<ImageBoxes> images;
    for (const auto& id : detection_images) {
      const ImageRecord& r = *manifest.Find(id);
      if (!InStratum(r, sr.name)) continue;
      ImageBoxes ib;
      auto it = predictions.find(id);
      if (it != predictions.end()) ib.predictions = it->second;
      for (const auto& roi : r.rois) ib.ground_truths.push_back(roi);
      sr.ground_truths += int(ib.ground_truths.size());
      images.push_back(std::move(ib));
    }
    sr.detection_images = int(images.size());

    auto image_metric = [&](auto f) -> MetricValue {
      if (scores.empty()) return {std::nullopt, "not evaluated"};
      if (pairs.empty()) return {std::nullopt, "empty"};
      return Evaluate(f);
    };
    auto box_metric = [&](auto f) -> MetricValue {
      if (detection_images.empty()) return {std::nullopt, "not evaluated"};
      if (images.empty()) return {std::nullopt, "empty"};
      return Evaluate(f);
    };
    sr.metrics.emplace_back("auc", image_metric([&] { return Auc(pairs); }));
    sr.metrics.emplace_back("ap", image_metric([&] { return AveragePrecision(pairs); }));
    std::optional<MapSummary> maps;
    auto map_metric = [&](double MapSummary::*field) {
      return box_metric([&] {
        if (!maps) maps = ComputeMap(images);
        return (*maps).*field;
      });
    };
    sr.metrics.emplace_back("map50", map_metric(&MapSummary::map50));
    sr.metrics.emplace_back("map75", map_metric(&MapSummary::map75));
    sr.metrics.emplace_back("map50_95", map_metric(&MapSummary::map50_95));
    sr.metrics.emplace_back("recall_any_overlap",
                            box_metric([&] { return RecallAnyOverlap(images); }));
    std::optional<IouSummary> ious;
    auto iou_metric = [&](double IouSummary::*field) {
      return box_metric([&] {
        if (!ious) ious = SummarizeIou(BestMatchIous(images));
        return (*ious).*field;
      });
    };
    sr.metrics.emplace_back("iou_median", iou_metric(&IouSummary::median));
    sr.metrics.emplace_back("iou_q1", iou_metric(&IouSummary::q1));
    sr.metrics.emplace_back("iou_q3", iou_metric(&IouSummary::q3));
    report.strata.push_back(std::move(sr));
  }
  return report;
}

EvalReport StratifiedReport(const DatasetManifest& manifest,
                            const std::vector<scoring::ImageScore>& scores,
                            const std::vector<detection::Detection>& detections) {
  std::set<std::string> ids;
  if (!detections.empty()) {
    for (const auto& d : detections) ids.insert(d.source_image_id);
    if (manifest.splits.empty()) {
      for (const auto& r : manifest.records) ids.insert(r.image_id);
    } else {
      for (const auto* r : manifest.InSplit(Split::kTest)) ids.insert(r->image_id);
    }
  }
  return StratifiedReport(manifest, scores, detections, ids);
}

}  // namespace dermtriage::metrics
