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

#include "dermtriage/image_scorer.h"

#include <algorithm>
#include <cmath>
#include <fstream>

#include "dermtriage/error.h"

namespace dermtriage::scoring {
using detection::Granularity;
using nlohmann::json;

std::string AggregationName(AggregationKind k) {
  switch (k) {
    case AggregationKind::kAverage: return "average";
    case AggregationKind::kMaximum: return "maximum";
    case AggregationKind::kNoisyOr: return "noisy_or";
  }
  return "";
}

std::string StrategyName(StrategyKind k) {
  switch (k) {
    case StrategyKind::kDirect: return "direct";
    case StrategyKind::kTwoStage: return "two_stage";
    case StrategyKind::kOneStepMalignancy: return "one_step_malignancy";
    case StrategyKind::kOneStepSubtype: return "one_step_subtype";
  }
  return "";
}

AggregationKind ParseAggregation(const std::string& s) {
  for (AggregationKind k : kAllAggregations) {
    if (AggregationName(k) == s) return k;
  }
  if (s == "max") return AggregationKind::kMaximum;
  throw SchemaError("unknown aggregator '" + s + "'");
}

StrategyKind ParseStrategy(const std::string& s) {
  for (StrategyKind k : kAllStrategies) {
    if (StrategyName(k) == s) return k;
  }
  throw SchemaError("unknown strategy '" + s + "'");
}

double Aggregate(std::span<const double> probs, AggregationKind kind, NoisyOrMode mode) {
  if (probs.empty()) throw DataError("cannot aggregate an empty probability list");
  for (double p : probs) {
    if (!(p > 0 && p < 1)) throw DataError("per-lesion probabilities must lie in (0, 1)");
  }
  switch (kind) {
    case AggregationKind::kAverage: {
      double sum = 0;
      for (double p : probs) sum += p;
      return sum / double(probs.size());
    }
    case AggregationKind::kMaximum:
      return *std::max_element(probs.begin(), probs.end());
    case AggregationKind::kNoisyOr: {
      if (probs.size() == 1 && mode == NoisyOrMode::kStandard) return probs[0];
      // Sum of logs keeps the product independent of element order.
      double log_prod = 0;
      for (double p : probs) log_prod += mode == NoisyOrMode::kStandard ? std::log1p(-p) : std::log(p);
      return -std::expm1(log_prod);
    }
  }
  return 0;
}

json ImageScoreToJson(const ImageScore& s) {
  json contributing = json::array();
  for (const auto& c : s.contributing) {
    contributing.push_back({{"box", {{"x_center", c.roi.x_center}, {"y_center", c.roi.y_center},
                                     {"width", c.roi.width}, {"height", c.roi.height}}},
                            {"probability", c.probability},
                            {"detection_score", c.detection_score}});
  }
  json j = {{"image_id", s.image_id},
            {"strategy", StrategyName(s.strategy)},
            {"aggregator", s.aggregator ? json(AggregationName(*s.aggregator)) : json(nullptr)},
            {"probability", s.probability},
            {"contributing", contributing}};
  return j;
}

ImageScore ImageScoreFromJson(const json& j) {
  try {
    ImageScore s;
    s.image_id = j.at("image_id").get<std::string>();
    s.strategy = ParseStrategy(j.at("strategy").get<std::string>());
    if (j.contains("aggregator") && !j["aggregator"].is_null()) {
      s.aggregator = ParseAggregation(j["aggregator"].get<std::string>());
    }
    s.probability = j.at("probability").get<double>();
    for (const auto& c : j.value("contributing", json::array())) {
      const json& b = c.at("box");
      s.contributing.push_back({{b.at("x_center").get<double>(), b.at("y_center").get<double>(),
                                 b.at("width").get<double>(), b.at("height").get<double>(),
                                 std::nullopt},
                                c.at("probability").get<double>(),
                                c.value("detection_score", 0.0)});
    }
    return s;
  } catch (const json::exception& e) {
    throw SchemaError(std::string("score record: ") + e.what());
  }
}

std::vector<ImageScore> ReadScoresJsonl(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw SchemaError("cannot open scores '" + path + "'");
  std::vector<ImageScore> out;
  std::string line;
  int n = 0;
  while (std::getline(in, line)) {
    ++n;
    if (line.empty()) continue;
    try {
      out.push_back(ImageScoreFromJson(json::parse(line)));
    } catch (const json::parse_error& e) {
      throw SchemaError(path + ":" + std::to_string(n) + ": " + e.what());
    }
  }
  return out;
}

ImageScore Summarize(const std::string& image_id, StrategyKind strategy,
                     AggregationKind aggregator, std::vector<Contribution> lesions,
                     const ScorerOptions& options) {
  ImageScore s;
  s.image_id = image_id;
  s.strategy = strategy;
  s.aggregator = aggregator;
  if (lesions.empty()) {
    s.probability = options.empty_probability;
    return s;
  }
  std::vector<double> probs;
  for (const auto& l : lesions) probs.push_back(l.probability);
  s.probability = Aggregate(probs, aggregator, options.noisy_or);
  s.contributing = std::move(lesions);
  return s;
}

double OneStepLesionProbability(const detection::Detection& d,
                                const detection::GranularityConfig& granularity) {
  if (granularity.kind == Granularity::kOneClass) {
    throw ModelError("a one-class detector carries no malignancy signal");
  }
  if (int(d.class_probs.size()) != granularity.num_classes()) {
    throw ModelError("detection class count does not match the detector");
  }
  double p = 0;
  for (int c : granularity.MalignantClasses()) p += d.class_probs[c];
  return std::clamp(p, 1e-12, 1 - 1e-12);
}

std::vector<Contribution> TwoStageLesions(const detection::DetectorModel& detector,
                                          const classify::ClassifierModel& classifier,
                                          const Image& image) {
  if (detector.granularity().kind != Granularity::kOneClass) {
    throw ModelError("two-stage scoring needs a one_class detector, got " +
                     detection::GranularityName(detector.granularity().kind));
  }
  if (classifier.input_kind() != classify::InputKind::kRoiCrop) {
    throw ModelError("two-stage scoring needs an ROI classifier");
  }
  std::vector<Contribution> out;
  for (const auto& d : detector.Detect(image)) {
    out.push_back({d.box, classifier.PredictRoi(image, d.box).probability, d.score});
  }
  return out;
}

std::vector<Contribution> OneStepLesions(const detection::DetectorModel& detector,
                                         const Image& image) {
  const auto& g = detector.granularity();
  if (g.kind == Granularity::kOneClass) {
    throw ModelError("one-step scoring needs a malignancy or sub_type detector");
  }
  std::vector<Contribution> out;
  for (const auto& d : detector.Detect(image)) {
    out.push_back({d.box, OneStepLesionProbability(d, g), d.score});
  }
  return out;
}

ImageScore ScoreTwoStage(const detection::DetectorModel& detector,
                         const classify::ClassifierModel& classifier, const Image& image,
                         const std::string& image_id, AggregationKind aggregator,
                         const ScorerOptions& options) {
  return Summarize(image_id, StrategyKind::kTwoStage, aggregator,
                   TwoStageLesions(detector, classifier, image), options);
}

ImageScore ScoreOneStep(const detection::DetectorModel& detector, const Image& image,
                        const std::string& image_id, AggregationKind aggregator,
                        const ScorerOptions& options) {
  const StrategyKind strategy = detector.granularity().kind == Granularity::kSubType
                                    ? StrategyKind::kOneStepSubtype
                                    : StrategyKind::kOneStepMalignancy;
  return Summarize(image_id, strategy, aggregator, OneStepLesions(detector, image), options);
}

ImageScore ScoreDirect(const classify::ClassifierModel& model, const Image& image,
                       const std::string& image_id) {
  if (model.input_kind() != classify::InputKind::kWholeImage) {
    throw ModelError("direct scoring needs a whole-image classifier");
  }
  ImageScore s;
  s.image_id = image_id;
  s.strategy = StrategyKind::kDirect;
  s.probability = model.PredictImage(image);
  return s;
}

}  // namespace dermtriage::scoring
