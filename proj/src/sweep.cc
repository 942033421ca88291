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

#include "dermtriage/sweep.h"

#include <sstream>

#include <fmt/format.h>
#include <spdlog/spdlog.h>

#include "dermtriage/error.h"
#include "dermtriage/metrics.h"

namespace dermtriage::scoring {

const SweepCell& SweepResult::Cell(StrategyKind s, AggregationKind a) const {
  for (const auto& c : cells) {
    if (c.strategy == s && c.aggregator == a) return c;
  }
  throw DataError("sweep has no cell " + StrategyName(s) + "/" + AggregationName(a));
}

std::string SweepResult::ToCsv() const {
  std::ostringstream out;
  out << "strategy,aggregator,auc,ap,status,n_images\n";
  for (const auto& c : cells) {
    out << StrategyName(c.strategy) << ',' << AggregationName(c.aggregator) << ',';
    if (c.auc) out << fmt::format("{:.10g}", *c.auc);
    out << ',';
    if (c.ap) out << fmt::format("{:.10g}", *c.ap);
    std::string status = c.status;
    for (char& ch : status) {
      if (ch == ',') ch = ';';
    }
    out << ',' << status << ',' << c.scores.size() << '\n';
  }
  return out.str();
}

std::string SweepResult::ToText() const {
  std::ostringstream out;
  out << fmt::format("{:<22}", "AUC / AP");
  for (AggregationKind a : kAllAggregations) out << fmt::format("{:>18}", AggregationName(a));
  out << '\n';
  for (StrategyKind s : kAllStrategies) {
    out << fmt::format("{:<22}", StrategyName(s));
    for (AggregationKind a : kAllAggregations) {
      const SweepCell& c = Cell(s, a);
      std::string text = "-";
      if (c.auc && c.ap) {
        text = fmt::format("{:.3f} / {:.3f}", *c.auc, *c.ap);
      } else if (c.status.rfind("undefined", 0) == 0) {
        text = "undef";
      }
      out << fmt::format("{:>18}", text);
    }
    out << '\n';
  }
  out << "direct scores are not aggregated; the row repeats one value.\n";
  return out.str();
}

SweepResult RunSweep(const DatasetManifest& manifest,
                     const std::vector<const ImageRecord*>& images, const SweepModels& models,
                     const ScorerOptions& options) {
  const bool two_stage = models.one_class && models.classifier;
  std::map<StrategyKind, std::vector<std::vector<Contribution>>> lesions;
  std::vector<double> direct;
  SweepResult result;
  auto record = [&](const detection::DetectorModel& det, const Image& img, const std::string& id) {
    auto dets = det.Detect(img, id);
    auto& sink = result.detections[detection::GranularityName(det.granularity().kind)];
    sink.insert(sink.end(), dets.begin(), dets.end());
    return dets;
  };
  int done = 0;
  for (const ImageRecord* r : images) {
    const Image img = LoadImage(manifest.ResolvePath(*r));
    if (two_stage) {
      std::vector<Contribution> ls;
      for (const auto& d : record(*models.one_class, img, r->image_id)) {
        ls.push_back({d.box, models.classifier->PredictRoi(img, d.box).probability, d.score});
      }
      lesions[StrategyKind::kTwoStage].push_back(std::move(ls));
    }
    const std::pair<StrategyKind, const detection::DetectorModel*> one_step[] = {
        {StrategyKind::kOneStepMalignancy, models.malignancy},
        {StrategyKind::kOneStepSubtype, models.subtype}};
    for (const auto& [kind, det] : one_step) {
      if (!det) continue;
      std::vector<Contribution> ls;
      for (const auto& d : record(*det, img, r->image_id)) {
        ls.push_back({d.box, OneStepLesionProbability(d, det->granularity()), d.score});
      }
      lesions[kind].push_back(std::move(ls));
    }
    if (models.direct) direct.push_back(ScoreDirect(*models.direct, img, r->image_id).probability);
    if (++done % 50 == 0) spdlog::info("scored {}/{} images", done, images.size());
  }

  for (StrategyKind s : kAllStrategies) {
    for (AggregationKind a : kAllAggregations) {
      SweepCell cell{s, a, std::nullopt, std::nullopt, "", {}};
      const bool available = s == StrategyKind::kDirect ? models.direct != nullptr
                                                         : lesions.count(s) > 0;
      if (!available) {
        cell.status = "not evaluated: model not provided";
        result.cells.push_back(std::move(cell));
        continue;
      }
      std::vector<metrics::ScoredLabel> pairs;
      for (std::size_t i = 0; i < images.size(); ++i) {
        ImageScore score;
        if (s == StrategyKind::kDirect) {
          score.image_id = images[i]->image_id;
          score.strategy = s;
          score.probability = direct[i];
        } else {
          score = Summarize(images[i]->image_id, s, a, lesions[s][i], options);
        }
        pairs.push_back({score.probability, images[i]->ImageLabel()});
        cell.scores.push_back(std::move(score));
      }
      cell.status = "ok";
      try {
        cell.auc = metrics::Auc(pairs);
        cell.ap = metrics::AveragePrecision(pairs);
      } catch (const UndefinedMetricError& e) {
        cell.status = std::string("undefined: ") + e.what();
      }
      result.cells.push_back(std::move(cell));
    }
  }
  return result;
}

}  // namespace dermtriage::scoring
