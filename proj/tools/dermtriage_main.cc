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

// Command-line driver: dataset synthesis, training, scoring, evaluation,
// feature export and the HTTP service.

#include <filesystem>
#include <fstream>
#include <iostream>
#include <memory>
#include <optional>
#include <set>
#include <string>
#include <thread>

#include <CLI11.hpp>
#include <json.hpp>
#include <spdlog/spdlog.h>

#include "dermtriage/classifier.h"
#include "dermtriage/combined.h"
#include "dermtriage/covariates.h"
#include "dermtriage/detector.h"
#include "dermtriage/error.h"
#include "dermtriage/image_scorer.h"
#include "dermtriage/logistic.h"
#include "dermtriage/manifest.h"
#include "dermtriage/metrics.h"
#include "dermtriage/report.h"
#include "dermtriage/run_manifest.h"
#include "dermtriage/service.h"
#include "dermtriage/sweep.h"
#include "dermtriage/synth.h"

namespace {

namespace fs = std::filesystem;
using namespace dermtriage;
using nlohmann::json;

json ReadJsonFile(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config '" + path + "'");
  try {
    return json::parse(in);
  } catch (const json::parse_error& e) {
    throw ConfigError("config '" + path + "': " + e.what());
  }
}

// Rejects keys the defaults do not know, then overlays them.
json MergeConfig(const json& defaults, const std::string& path) {
  if (path.empty()) return defaults;
  const json doc = ReadJsonFile(path);
  if (!doc.is_object()) throw ConfigError("config '" + path + "' must be an object");
  json merged = defaults;
  for (const auto& [k, v] : doc.items()) {
    if (!defaults.contains(k)) throw ConfigError("config '" + path + "': unknown key '" + k + "'");
    merged[k] = v;
  }
  return merged;
}

DatasetManifest OpenManifest(const std::string& path, const std::string& splits) {
  if (!splits.empty()) return LoadManifest(path, splits);
  const fs::path sibling = fs::path(path).parent_path() / "splits.json";
  if (fs::exists(sibling)) return LoadManifest(path, sibling.string());
  return LoadManifest(path);
}

std::vector<const ImageRecord*> Select(const DatasetManifest& m, const std::string& split) {
  if (split == "all" || m.splits.empty()) {
    if (split != "all") spdlog::warn("manifest has no split assignment; using every image");
    std::vector<const ImageRecord*> out;
    for (const auto& r : m.records) out.push_back(&r);
    return out;
  }
  return m.InSplit(ParseSplit(split));
}

void WriteText(const fs::path& path, const std::string& text) {
  std::ofstream out(path);
  if (!out) throw Error("cannot write '" + path.string() + "'");
  out << text;
}

struct Common {
  std::string manifest;
  std::string splits;
  std::string out;
  std::string config;
};

void AddManifest(CLI::App* cmd, Common& c) {
  cmd->add_option("--manifest", c.manifest, "Dataset manifest JSON")->required();
  cmd->add_option("--splits", c.splits, "Split assignment JSON (default: splits.json beside the manifest)");
}

int ExitCode(const std::exception& e) {
  if (dynamic_cast<const SchemaError*>(&e)) return 2;
  if (dynamic_cast<const DataError*>(&e)) return 3;
  if (dynamic_cast<const ConfigError*>(&e)) return 4;
  if (dynamic_cast<const DecodeError*>(&e)) return 5;
  if (dynamic_cast<const ModelError*>(&e)) return 6;
  if (dynamic_cast<const UndefinedMetricError*>(&e)) return 7;
  return 1;
}

std::string ErrorKind(int code) {
  switch (code) {
    case 2: return "schema";
    case 3: return "data";
    case 4: return "config";
    case 5: return "decode";
    case 6: return "model";
    case 7: return "undefined_metric";
  }
  return "internal";
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Lesion detection, malignancy scoring and evaluation"};
  app.require_subcommand(1);
  std::string log_level = "info";
  app.add_option("--log-level", log_level, "trace, debug, info, warn, error");

  // synth
  Common synth_c;
  synth::SynthConfig synth_cfg;
  double train_fraction = 0.8, val_fraction = 0.0;
  std::uint64_t split_seed = 3;
  auto* synth_cmd = app.add_subcommand("synth", "Generate a synthetic dataset");
  synth_cmd->add_option("--out", synth_c.out, "Output directory")->required();
  synth_cmd->add_option("--num-images", synth_cfg.num_images);
  synth_cmd->add_option("--seed", synth_cfg.seed);
  synth_cmd->add_option("--irregularity", synth_cfg.irregularity);
  synth_cmd->add_option("--contrast", synth_cfg.contrast);
  synth_cmd->add_option("--covariate-strength", synth_cfg.covariate_strength);
  synth_cmd->add_option("--dermoscopy-fraction", synth_cfg.dermoscopy_fraction);
  synth_cmd->add_option("--train-fraction", train_fraction);
  synth_cmd->add_option("--val-fraction", val_fraction);
  synth_cmd->add_option("--split-seed", split_seed);

  // train-detector
  Common det_c;
  std::string granularity = "one_class";
  double det_scale = 1.0;
  std::optional<std::uint64_t> det_seed;
  auto* det_cmd = app.add_subcommand("train-detector", "Train a lesion detector");
  AddManifest(det_cmd, det_c);
  det_cmd->add_option("--out", det_c.out, "Checkpoint directory")->required();
  det_cmd->add_option("--granularity", granularity, "one_class, malignancy or sub_type");
  det_cmd->add_option("--config", det_c.config, "Detector config JSON");
  det_cmd->add_option("--scale", det_scale, "Scales steps and decay breakpoints");
  det_cmd->add_option("--seed", det_seed);

  // train-classifier / train-direct
  Common cls_c, dir_c;
  double cls_scale = 1.0, dir_scale = 1.0;
  std::optional<std::uint64_t> cls_seed, dir_seed;
  auto* cls_cmd = app.add_subcommand("train-classifier", "Train the ROI malignancy classifier");
  AddManifest(cls_cmd, cls_c);
  cls_cmd->add_option("--out", cls_c.out)->required();
  cls_cmd->add_option("--config", cls_c.config, "Classifier config JSON");
  cls_cmd->add_option("--scale", cls_scale, "Scales the epoch count");
  cls_cmd->add_option("--seed", cls_seed);
  auto* dir_cmd = app.add_subcommand("train-direct", "Train the whole-image classifier");
  AddManifest(dir_cmd, dir_c);
  dir_cmd->add_option("--out", dir_c.out)->required();
  dir_cmd->add_option("--config", dir_c.config, "Classifier config JSON");
  dir_cmd->add_option("--scale", dir_scale, "Scales the epoch count");
  dir_cmd->add_option("--seed", dir_seed);

  // train-clinical / train-combined
  Common clin_c, comb_c;
  std::string clin_cov, clin_schema, comb_cov, comb_schema, comb_classifier;
  double l2 = 1.0, comb_scale = 1.0;
  std::optional<std::uint64_t> comb_seed;
  auto* clin_cmd = app.add_subcommand("train-clinical", "Train the covariate logistic regression");
  AddManifest(clin_cmd, clin_c);
  clin_cmd->add_option("--covariates", clin_cov, "Covariate CSV")->required();
  clin_cmd->add_option("--schema", clin_schema, "Covariate schema JSON")->required();
  clin_cmd->add_option("--l2", l2);
  clin_cmd->add_option("--out", clin_c.out)->required();
  auto* comb_cmd = app.add_subcommand("train-combined", "Train the image + covariate model");
  AddManifest(comb_cmd, comb_c);
  comb_cmd->add_option("--covariates", comb_cov)->required();
  comb_cmd->add_option("--schema", comb_schema)->required();
  comb_cmd->add_option("--classifier", comb_classifier, "Classifier checkpoint")->required();
  comb_cmd->add_option("--config", comb_c.config);
  comb_cmd->add_option("--scale", comb_scale);
  comb_cmd->add_option("--seed", comb_seed);
  comb_cmd->add_option("--out", comb_c.out)->required();

  // score
  Common score_c;
  std::string split = "test", strategy, aggregator;
  std::string m_one, m_cls, m_mal, m_sub, m_dir;
  double empty_probability = 0.0;
  bool as_printed = false;
  auto* score_cmd = app.add_subcommand("score", "Score images; sweeps strategies x aggregators");
  AddManifest(score_cmd, score_c);
  score_cmd->add_option("--split", split, "train, val, test or all");
  score_cmd->add_option("--out", score_c.out)->required();
  score_cmd->add_option("--detector", m_one, "one_class detector checkpoint");
  score_cmd->add_option("--classifier", m_cls, "ROI classifier checkpoint");
  score_cmd->add_option("--malignancy-detector", m_mal);
  score_cmd->add_option("--subtype-detector", m_sub);
  score_cmd->add_option("--direct", m_dir, "Whole-image classifier checkpoint");
  score_cmd->add_option("--strategy", strategy, "Score one strategy only");
  score_cmd->add_option("--aggregator", aggregator, "average, maximum or noisy_or");
  score_cmd->add_option("--empty-probability", empty_probability,
                        "Image probability when nothing is detected");
  score_cmd->add_flag("--noisy-or-as-printed", as_printed, "Use 1 - prod(p) for noisy-OR");

  // evaluate
  Common eval_c;
  std::string scores_path, detections_path, eval_split = "test";
  auto* eval_cmd = app.add_subcommand("evaluate", "Stratified metric report");
  AddManifest(eval_cmd, eval_c);
  eval_cmd->add_option("--scores", scores_path, "ImageScore JSON lines");
  eval_cmd->add_option("--detections", detections_path, "Detection JSON lines");
  eval_cmd->add_option("--split", eval_split, "Images evaluated for detection metrics");
  eval_cmd->add_option("--out", eval_c.out)->required();

  // export-features
  Common feat_c;
  std::string feat_detector, feat_split = "test";
  auto* feat_cmd = app.add_subcommand("export-features", "Per-detection pooled features (CSV)");
  AddManifest(feat_cmd, feat_c);
  feat_cmd->add_option("--detector", feat_detector)->required();
  feat_cmd->add_option("--split", feat_split);
  feat_cmd->add_option("--out", feat_c.out, "Output directory")->required();

  // serve
  std::string host = "127.0.0.1", ann_dir = "annotations";
  std::string s_one, s_cls, s_mal, s_sub, s_dir, s_comb;
  int port = 8080;
  auto* serve_cmd = app.add_subcommand("serve", "HTTP service");
  serve_cmd->add_option("--host", host);
  serve_cmd->add_option("--port", port);
  serve_cmd->add_option("--annotations", ann_dir, "Annotation store directory");
  serve_cmd->add_option("--detector", s_one);
  serve_cmd->add_option("--classifier", s_cls);
  serve_cmd->add_option("--malignancy-detector", s_mal);
  serve_cmd->add_option("--subtype-detector", s_sub);
  serve_cmd->add_option("--direct", s_dir);
  serve_cmd->add_option("--combined", s_comb);

  CLI11_PARSE(app, argc, argv);
  spdlog::set_level(spdlog::level::from_str(log_level));
  spdlog::set_pattern("[%H:%M:%S] [%l] %v");

  try {
    if (synth_cmd->parsed()) {
      synth_cfg.Validate();
      auto ds = synth::GenerateDataset(synth_cfg, synth_c.out);
      const double test = 1.0 - train_fraction - val_fraction;
      if (train_fraction <= 0 || val_fraction < 0 || test < -1e-9) {
        throw ConfigError("split fractions must be non-negative and sum to at most 1");
      }
      const DatasetManifest split_m = PatientSplit(ds.manifest, {train_fraction, val_fraction}, split_seed);
      WriteSplits(split_m, (fs::path(synth_c.out) / "splits.json").string());
      RunManifest rm{"synth", {}, {{"num_images", synth_cfg.num_images},
                                   {"irregularity", synth_cfg.irregularity},
                                   {"contrast", synth_cfg.contrast},
                                   {"covariate_strength", synth_cfg.covariate_strength},
                                   {"dermoscopy_fraction", synth_cfg.dermoscopy_fraction},
                                   {"train_fraction", train_fraction},
                                   {"val_fraction", val_fraction},
                                   {"split_seed", split_seed}},
                     synth_cfg.seed};
      rm.Write(synth_c.out);
      std::cout << FormatLesionTable(ds.manifest);
      spdlog::info("wrote {} images to {}", ds.manifest.records.size(), synth_c.out);
    } else if (det_cmd->parsed()) {
      json cfg_doc = MergeConfig(detection::DetectorTrainConfig{}.ToJson(), det_c.config);
      if (det_seed) cfg_doc["seed"] = *det_seed;
      auto cfg = detection::DetectorTrainConfig::FromJson(cfg_doc).Scaled(det_scale);
      cfg.Validate();
      const auto gran = detection::GranularityConfig::Make(detection::ParseGranularity(granularity));
      const auto manifest = OpenManifest(det_c.manifest, det_c.splits);
      auto model = detection::TrainDetector(manifest, gran, cfg);
      model.Save(det_c.out);
      RunManifest rm{"train-detector", {}, cfg.ToJson(), cfg.seed};
      rm.config["granularity"] = granularity;
      rm.AddInput("manifest", det_c.manifest);
      rm.Write(det_c.out);
      spdlog::info("detector {} saved to {}", model.id(), det_c.out);
    } else if (cls_cmd->parsed() || dir_cmd->parsed()) {
      const bool direct = dir_cmd->parsed();
      Common& c = direct ? dir_c : cls_c;
      json cfg_doc = MergeConfig(classify::ClassifierTrainConfig{}.ToJson(), c.config);
      const auto& seed = direct ? dir_seed : cls_seed;
      if (seed) cfg_doc["seed"] = *seed;
      const auto cfg =
          classify::ClassifierTrainConfig::FromJson(cfg_doc).Scaled(direct ? dir_scale : cls_scale);
      const auto manifest = OpenManifest(c.manifest, c.splits);
      auto model = direct ? classify::TrainDirect(manifest, cfg)
                          : classify::TrainClassifier(manifest, cfg);
      model.Save(c.out);
      RunManifest rm{direct ? "train-direct" : "train-classifier", {}, cfg.ToJson(), cfg.seed};
      rm.AddInput("manifest", c.manifest);
      rm.Write(c.out);
    } else if (clin_cmd->parsed()) {
      const auto schema = clinical::LoadSchema(clin_schema);
      const auto rows = clinical::LoadCovariateCsv(clin_cov, schema);
      const auto manifest = OpenManifest(clin_c.manifest, clin_c.splits);
      clinical::LogisticConfig lc;
      lc.l2 = l2;
      const auto model = clinical::TrainClinical(manifest, rows, schema, lc);
      model.Save(clin_c.out);
      json evaluation = json::object();
      std::map<std::string, const clinical::CovariateRow*> by_id;
      for (const auto& r : rows) by_id[r.image_id] = &r;
      for (const char* s : {"val", "test"}) {
        std::vector<metrics::ScoredLabel> pairs;
        for (const auto* r : manifest.InSplit(ParseSplit(s))) {
          auto it = by_id.find(r->image_id);
          if (it != by_id.end()) pairs.push_back({model.Predict(*it->second), r->ImageLabel()});
        }
        try {
          evaluation[s] = {{"auc", metrics::Auc(pairs)},
                           {"ap", metrics::AveragePrecision(pairs)},
                           {"n", pairs.size()}};
        } catch (const UndefinedMetricError& e) {
          evaluation[s] = {{"status", std::string("undefined: ") + e.what()}, {"n", pairs.size()}};
        }
      }
      WriteText(fs::path(clin_c.out) / "metrics.json", evaluation.dump(2) + "\n");
      RunManifest rm{"train-clinical", {}, {{"l2", l2}, {"tolerance", lc.tolerance}}, 0};
      rm.AddInput("manifest", clin_c.manifest);
      rm.AddInput("covariates", clin_cov);
      rm.AddInput("schema", clin_schema);
      rm.Write(clin_c.out);
      std::cout << evaluation.dump(2) << "\n";
    } else if (comb_cmd->parsed()) {
      json cfg_doc = MergeConfig(clinical::CombinedDefaults().ToJson(), comb_c.config);
      if (comb_seed) cfg_doc["seed"] = *comb_seed;
      const auto cfg = classify::ClassifierTrainConfig::FromJson(cfg_doc).Scaled(comb_scale);
      const auto schema = clinical::LoadSchema(comb_schema);
      const auto rows = clinical::LoadCovariateCsv(comb_cov, schema);
      const auto manifest = OpenManifest(comb_c.manifest, comb_c.splits);
      auto backbone = std::make_shared<const classify::ClassifierModel>(
          classify::ClassifierModel::Load(comb_classifier));
      const auto model = clinical::TrainCombined(backbone, manifest, rows, schema, cfg);
      model.Save(comb_c.out);
      RunManifest rm{"train-combined", {}, cfg.ToJson(), cfg.seed};
      rm.AddInput("manifest", comb_c.manifest);
      rm.AddInput("covariates", comb_cov);
      rm.AddInput("schema", comb_schema);
      rm.AddInput("classifier", comb_classifier);
      rm.Write(comb_c.out);
    } else if (score_cmd->parsed()) {
      std::optional<scoring::StrategyKind> want_strategy;
      std::optional<scoring::AggregationKind> want_aggregator;
      if (!strategy.empty()) want_strategy = scoring::ParseStrategy(strategy);
      if (!aggregator.empty()) want_aggregator = scoring::ParseAggregation(aggregator);
      if (want_strategy) {
        using scoring::StrategyKind;
        const bool have = *want_strategy == StrategyKind::kTwoStage
                              ? !m_one.empty() && !m_cls.empty()
                          : *want_strategy == StrategyKind::kOneStepMalignancy ? !m_mal.empty()
                          : *want_strategy == StrategyKind::kOneStepSubtype    ? !m_sub.empty()
                                                                               : !m_dir.empty();
        if (!have) throw ConfigError("strategy '" + strategy + "' needs its model checkpoints");
      }
      const auto manifest = OpenManifest(score_c.manifest, score_c.splits);
      const auto images = Select(manifest, split);
      scoring::ScorerOptions opts;
      opts.empty_probability = empty_probability;
      opts.noisy_or = as_printed ? scoring::NoisyOrMode::kAsPrinted : scoring::NoisyOrMode::kStandard;
      std::optional<detection::DetectorModel> one, mal, sub;
      std::optional<classify::ClassifierModel> cls, dir;
      if (!m_one.empty()) one = detection::DetectorModel::Load(m_one);
      if (!m_cls.empty()) cls = classify::ClassifierModel::Load(m_cls);
      if (!m_mal.empty()) mal = detection::DetectorModel::Load(m_mal);
      if (!m_sub.empty()) sub = detection::DetectorModel::Load(m_sub);
      if (!m_dir.empty()) dir = classify::ClassifierModel::Load(m_dir);
      scoring::SweepModels sm{one ? &*one : nullptr, cls ? &*cls : nullptr,
                              mal ? &*mal : nullptr, sub ? &*sub : nullptr,
                              dir ? &*dir : nullptr};
      if (want_strategy) {
        // Restrict the sweep to the requested strategy's models.
        const auto s = *want_strategy;
        if (s != scoring::StrategyKind::kTwoStage) {
          sm.one_class = nullptr;
          sm.classifier = nullptr;
        }
        if (s != scoring::StrategyKind::kOneStepMalignancy) sm.malignancy = nullptr;
        if (s != scoring::StrategyKind::kOneStepSubtype) sm.subtype = nullptr;
        if (s != scoring::StrategyKind::kDirect) sm.direct = nullptr;
      }
      const auto result = scoring::RunSweep(manifest, images, sm, opts);
      fs::create_directories(score_c.out);
      for (const auto& [gran, dets] : result.detections) {
        std::ofstream out(fs::path(score_c.out) / ("detections_" + gran + ".jsonl"));
        detection::WriteDetectionsJsonl(dets, out);
      }
      bool any = false;
      for (const auto& cell : result.cells) {
        if (cell.scores.empty() && !images.empty()) continue;
        if (want_strategy && cell.strategy != *want_strategy) continue;
        if (want_aggregator && cell.aggregator != *want_aggregator) continue;
        if (cell.strategy == scoring::StrategyKind::kDirect &&
            cell.aggregator != scoring::AggregationKind::kAverage) {
          continue;
        }
        std::string name = "scores_" + scoring::StrategyName(cell.strategy);
        if (cell.strategy != scoring::StrategyKind::kDirect) {
          name += "_" + scoring::AggregationName(cell.aggregator);
        }
        std::ofstream out(fs::path(score_c.out) / (name + ".jsonl"));
        for (const auto& s : cell.scores) {
          const json j = scoring::ImageScoreToJson(s);
          out << j.dump() << "\n";
          if (!strategy.empty() && !aggregator.empty()) std::cout << j.dump() << "\n";
        }
        any = true;
      }
      if (!any) throw ConfigError("no model was given for the requested strategy");
      WriteText(fs::path(score_c.out) / "comparison.csv", result.ToCsv());
      WriteText(fs::path(score_c.out) / "comparison.txt", result.ToText());
      if (strategy.empty() || aggregator.empty()) std::cout << result.ToText();
      RunManifest rm{"score", {}, {{"split", split}, {"strategy", strategy},
                                   {"aggregator", aggregator},
                                   {"empty_probability", empty_probability},
                                   {"noisy_or_as_printed", as_printed}}, 0};
      rm.AddInput("manifest", score_c.manifest);
      for (const auto& [role, p] : {std::pair{"detector", m_one}, {"classifier", m_cls},
                                    {"malignancy_detector", m_mal}, {"subtype_detector", m_sub},
                                    {"direct", m_dir}}) {
        if (!p.empty()) rm.AddInput(role, (fs::path(p) / "weights.bin").string());
      }
      rm.Write(score_c.out);
    } else if (eval_cmd->parsed()) {
      const auto manifest = OpenManifest(eval_c.manifest, eval_c.splits);
      std::vector<scoring::ImageScore> scores;
      std::vector<detection::Detection> dets;
      std::set<std::string> ids;
      if (!scores_path.empty()) scores = scoring::ReadScoresJsonl(scores_path);
      if (!detections_path.empty()) {
        dets = detection::ReadDetectionsJsonl(detections_path);
        for (const auto* r : Select(manifest, eval_split)) ids.insert(r->image_id);
        for (const auto& d : dets) ids.insert(d.source_image_id);
      }
      if (scores.empty() && detections_path.empty()) {
        throw ConfigError("evaluate needs --scores and/or --detections");
      }
      const auto report = metrics::StratifiedReport(manifest, scores, dets, ids);
      report.Write(eval_c.out);
      std::cout << report.ToText();
      RunManifest rm{"evaluate", {}, {{"split", eval_split}}, 0};
      rm.AddInput("manifest", eval_c.manifest);
      if (!scores_path.empty()) rm.AddInput("scores", scores_path);
      if (!detections_path.empty()) rm.AddInput("detections", detections_path);
      rm.Write(eval_c.out);
    } else if (feat_cmd->parsed()) {
      const auto manifest = OpenManifest(feat_c.manifest, feat_c.splits);
      const auto det = detection::DetectorModel::Load(feat_detector);
      fs::create_directories(feat_c.out);
      std::ofstream out(fs::path(feat_c.out) / "features.csv");
      out << "image_id,capture,x_center,y_center,width,height,score,gt_label";
      for (int i = 0; i < det.feature_size(); ++i) out << ",f" << i;
      out << "\n";
      std::size_t rows = 0;
      for (const auto* r : Select(manifest, feat_split)) {
        const Image img = LoadImage(manifest.ResolvePath(*r));
        const auto dets = det.Detect(img, r->image_id);
        const auto feats = det.ExportFeatures(img, dets);
        for (std::size_t i = 0; i < dets.size(); ++i) {
          // Label of the best-overlapping ground truth at IoU >= 0.5.
          std::string label = "none";
          double best = 0.5;
          for (const auto& gt : r->rois) {
            const double iou = metrics::Iou(dets[i].box, gt);
            if (iou >= best && gt.label) {
              best = iou;
              label = LabelName(*gt.label);
            }
          }
          const auto& b = dets[i].box;
          out << r->image_id << ',' << CaptureName(r->capture) << ',' << b.x_center << ','
              << b.y_center << ',' << b.width << ',' << b.height << ',' << dets[i].score << ','
              << label;
          for (float f : feats[i]) out << ',' << f;
          out << "\n";
          ++rows;
        }
      }
      RunManifest rm{"export-features", {}, {{"split", feat_split}}, 0};
      rm.AddInput("manifest", feat_c.manifest);
      rm.AddInput("detector", (fs::path(feat_detector) / "weights.bin").string());
      rm.Write(feat_c.out);
      spdlog::info("wrote {} feature rows", rows);
    } else if (serve_cmd->parsed()) {
      service::Service svc({ann_dir, {}});
      std::thread loader([&] {
        try {
          service::ServiceModels m;
          if (!s_one.empty())
            m.one_class = std::make_shared<const detection::DetectorModel>(detection::DetectorModel::Load(s_one));
          if (!s_cls.empty())
            m.classifier = std::make_shared<const classify::ClassifierModel>(classify::ClassifierModel::Load(s_cls));
          if (!s_mal.empty())
            m.malignancy = std::make_shared<const detection::DetectorModel>(detection::DetectorModel::Load(s_mal));
          if (!s_sub.empty())
            m.subtype = std::make_shared<const detection::DetectorModel>(detection::DetectorModel::Load(s_sub));
          if (!s_dir.empty())
            m.direct = std::make_shared<const classify::ClassifierModel>(classify::ClassifierModel::Load(s_dir));
          if (!s_comb.empty())
            m.combined = std::make_shared<const clinical::CombinedModel>(clinical::CombinedModel::Load(s_comb));
          svc.SetModels(std::move(m));
          spdlog::info("models loaded");
        } catch (const std::exception& e) {
          spdlog::error("model loading failed: {}", e.what());
          std::exit(ExitCode(e));
        }
      });
      spdlog::info("serving on {}:{}", host, port);
      svc.Run(host, port);
      loader.join();
    }
  } catch (const std::exception& e) {
    const int code = ExitCode(e);
    std::cerr << json{{"error", ErrorKind(code)}, {"message", e.what()}}.dump() << "\n";
    return code;
  }
  return 0;
}
