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

#include "dermtriage/classifier.h"

#include <algorithm>
#include <array>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <limits>
#include <numbers>
#include <numeric>
#include <random>

#include <spdlog/spdlog.h>

#include "dermtriage/error.h"
#include "dermtriage/metrics.h"
#include "dermtriage/nn.h"

namespace dermtriage::classify {
namespace fs = std::filesystem;
using nlohmann::json;
using nn::Tensor;

namespace {

constexpr int kStages = 4;

std::string KindName(InputKind k) { return k == InputKind::kRoiCrop ? "roi_crop" : "whole_image"; }

InputKind ParseKind(const std::string& s) {
  if (s == "roi_crop") return InputKind::kRoiCrop;
  if (s == "whole_image") return InputKind::kWholeImage;
  throw ModelError("unknown classifier input kind '" + s + "'");
}

Image Flip(const Image& img, bool fx, bool fy) {
  if (!fx && !fy) return img;
  Image out(img.width, img.height);
  for (int y = 0; y < img.height; ++y) {
    for (int x = 0; x < img.width; ++x) {
      const int sx = fx ? img.width - 1 - x : x;
      const int sy = fy ? img.height - 1 - y : y;
      for (int c = 0; c < 3; ++c) out.at(x, y, c) = img.at(sx, sy, c);
    }
  }
  return out;
}

}  // namespace

struct ClassifierModel::Net {
  std::array<nn::Conv2d, kStages> stages{
      nn::Conv2d("stage1", 3, 16, 3, 2, 1), nn::Conv2d("stage2", 16, 32, 3, 2, 1),
      nn::Conv2d("stage3", 32, 64, 3, 2, 1), nn::Conv2d("stage4", 64, 64, 3, 2, 1)};
  nn::Linear fc{"fc", 64, 1};

  std::vector<nn::Param*> Params() {
    std::vector<nn::Param*> p;
    for (auto& s : stages) {
      p.push_back(&s.weight);
      p.push_back(&s.bias);
    }
    p.push_back(&fc.weight);
    p.push_back(&fc.bias);
    return p;
  }

  struct Cache {
    Tensor input;
    std::array<Tensor, kStages> acts;
    std::array<std::vector<float>, kStages> cols;
    std::vector<float> pooled;
  };

  std::vector<float> Features(const Tensor& x, Cache* cache) const {
    std::array<Tensor, kStages> acts;
    const Tensor* in = &x;
    for (int i = 0; i < kStages; ++i) {
      acts[i] = stages[i].Forward(*in, cache ? &cache->cols[i] : nullptr);
      nn::ReluInPlace(acts[i]);
      in = &acts[i];
    }
    std::vector<float> pooled = nn::GlobalAveragePool(acts.back());
    if (cache) {
      cache->input = x;
      cache->acts = std::move(acts);
      cache->pooled = pooled;
    }
    return pooled;
  }

  void Backward(const Cache& c, double dlogit) {
    const std::vector<float> dpool = fc.Backward(c.pooled, {float(dlogit)});
    const Tensor& last = c.acts.back();
    Tensor d = nn::GlobalAveragePoolBackward(dpool, last.channels, last.height, last.width);
    for (int i = kStages - 1; i >= 0; --i) {
      nn::ReluBackward(c.acts[i], d);
      d = stages[i].Backward(i == 0 ? c.input : c.acts[i - 1], c.cols[i], d, i > 0);
    }
  }
};

void ClassifierTrainConfig::Validate() const {
  if (epochs < 1) throw ConfigError("epochs must be >= 1");
  if (!(base_lr > 0)) throw ConfigError("base_lr must be positive");
  if (batch_size < 1) throw ConfigError("batch_size must be >= 1");
  if (crop_side < 16) throw ConfigError("crop_side must be >= 16");
}

ClassifierTrainConfig ClassifierTrainConfig::Scaled(double factor) const {
  if (!(factor > 0)) throw ConfigError("schedule scale factor must be positive");
  ClassifierTrainConfig c = *this;
  c.epochs = std::max(1, int(std::lround(epochs * factor)));
  return c;
}

json ClassifierTrainConfig::ToJson() const {
  return {{"epochs", epochs},       {"batch_size", batch_size},
          {"base_lr", base_lr},     {"momentum", momentum},
          {"weight_decay", weight_decay}, {"crop_side", crop_side},
          {"flip_augment", flip_augment}, {"lr_schedule", "half_period_cosine"},
          {"seed", seed}};
}

ClassifierTrainConfig ClassifierTrainConfig::FromJson(const json& j) {
  ClassifierTrainConfig c;
  try {
    c.epochs = j.value("epochs", c.epochs);
    c.batch_size = j.value("batch_size", c.batch_size);
    c.base_lr = j.value("base_lr", c.base_lr);
    c.momentum = j.value("momentum", c.momentum);
    c.weight_decay = j.value("weight_decay", c.weight_decay);
    c.crop_side = j.value("crop_side", c.crop_side);
    c.flip_augment = j.value("flip_augment", c.flip_augment);
    c.seed = j.value("seed", c.seed);
  } catch (const json::exception& e) {
    throw SchemaError(std::string("classifier config: ") + e.what());
  }
  c.Validate();
  return c;
}

double CosineLr(long t, long t_max, double base) {
  if (t_max <= 0) throw ConfigError("cosine schedule needs t_max > 0");
  if (t < 0 || t > t_max) throw ConfigError("cosine schedule step outside [0, t_max]");
  return base * (0.5 + 0.5 * std::cos(double(t) * std::numbers::pi / double(t_max)));
}

ClassifierModel::ClassifierModel(ClassifierTrainConfig config, InputKind kind)
    : config_(std::move(config)), kind_(kind), net_(std::make_unique<Net>()) {
  config_.Validate();
  std::mt19937_64 rng(config_.seed);
  for (auto& s : net_->stages) s.Init(rng);
  net_->fc.Init(rng, 1.0f);
}

ClassifierModel::~ClassifierModel() = default;
ClassifierModel::ClassifierModel(ClassifierModel&&) noexcept = default;
ClassifierModel& ClassifierModel::operator=(ClassifierModel&&) noexcept = default;

Image ClassifierModel::PrepareRoi(const Image& image, const Roi& roi) const {
  return ExtractCrop(image, roi, config_.crop_side);
}

Image ClassifierModel::PrepareWhole(const Image& image) const {
  if (image.empty()) throw DecodeError("empty image");
  return Resize(image, config_.crop_side, config_.crop_side);
}

std::vector<float> ClassifierModel::Features(const Image& input) const {
  if (input.width != config_.crop_side || input.height != config_.crop_side) {
    throw ModelError("classifier input must be " + std::to_string(config_.crop_side) +
                     " pixels square");
  }
  return net_->Features(nn::FromImage(input), nullptr);
}

int ClassifierModel::feature_size() const { return net_->fc.in_features(); }

double ClassifierModel::Logit(const std::vector<float>& features) const {
  return net_->fc.Forward(features)[0];
}

double ClassifierModel::PredictPrepared(const Image& input) const {
  return nn::Sigmoid(Logit(Features(input)));
}

MalignancyScore ClassifierModel::PredictRoi(const Image& image, const Roi& roi,
                                            const std::string& image_id) const {
  return {PredictPrepared(PrepareRoi(image, roi)), roi, image_id};
}

double ClassifierModel::PredictImage(const Image& image) const {
  return PredictPrepared(PrepareWhole(image));
}

std::size_t ClassifierModel::num_params() const {
  return nn::CountParams(net_->Params(), false);
}

void ClassifierModel::Save(const std::string& dir) const {
  fs::create_directories(dir);
  std::vector<const nn::Param*> params;
  for (nn::Param* p : net_->Params()) params.push_back(p);
  nn::WriteParams(params, (fs::path(dir) / "weights.bin").string());
  json meta = {{"type", "classifier"},
               {"backend", "conv_gap_v1"},
               {"input_kind", KindName(kind_)},
               {"target", "roi label in {MEL, BCC, AKIEC}"},
               {"config", config_.ToJson()},
               {"feature_size", feature_size()},
               {"curves", "curves.csv"}};
  std::ofstream((fs::path(dir) / "model.json").string()) << meta.dump(2) << "\n";
  std::ofstream curves((fs::path(dir) / "curves.csv").string());
  curves << "epoch,loss,val_auc\n";
  for (const auto& e : curves_) {
    curves << e.epoch << ',' << e.loss << ',';
    if (std::isnan(e.val_auc)) {
      curves << "";
    } else {
      curves << e.val_auc;
    }
    curves << '\n';
  }
}

ClassifierModel ClassifierModel::Load(const std::string& dir) {
  std::ifstream in((fs::path(dir) / "model.json").string());
  if (!in) throw ModelError("no classifier checkpoint in '" + dir + "'");
  json meta;
  try {
    meta = json::parse(in);
  } catch (const json::parse_error& e) {
    throw ModelError(std::string("classifier metadata: ") + e.what());
  }
  if (meta.value("type", "") != "classifier") throw ModelError("'" + dir + "' is not a classifier");
  ClassifierModel m(ClassifierTrainConfig::FromJson(meta.at("config")),
                    ParseKind(meta.value("input_kind", "roi_crop")));
  nn::ReadParams(m.net_->Params(), (fs::path(dir) / "weights.bin").string());
  return m;
}

class ClassifierTrainer {
 public:
  static ClassifierModel Train(const std::vector<LabeledInput>& train,
                               const std::vector<LabeledInput>& val,
                               const ClassifierTrainConfig& cfg, InputKind kind) {
    cfg.Validate();
    int positives = 0;
    for (const auto& s : train) {
      if (s.input.width != cfg.crop_side || s.input.height != cfg.crop_side) {
        throw DataError("training input has the wrong size");
      }
      positives += s.label;
    }
    if (positives == 0 || positives == int(train.size())) {
      throw DataError("classifier training set must contain both malignant and benign samples");
    }
    ClassifierModel model(cfg, kind);
    auto& net = *model.net_;
    const auto params = net.Params();
    const nn::SgdConfig sgd{cfg.momentum, cfg.weight_decay};
    std::mt19937_64 rng(cfg.seed + 1);
    std::vector<std::size_t> order(train.size());
    std::iota(order.begin(), order.end(), 0);
    const long batches_per_epoch = long((train.size() + cfg.batch_size - 1) / cfg.batch_size);
    const long total_steps = batches_per_epoch * cfg.epochs;
    long step = 0;
    ClassifierModel::Net::Cache cache;
    for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
      std::shuffle(order.begin(), order.end(), rng);
      double epoch_loss = 0;
      for (std::size_t start = 0; start < order.size(); start += cfg.batch_size) {
        const std::size_t end = std::min(order.size(), start + cfg.batch_size);
        const double n = double(end - start);
        for (std::size_t k = start; k < end; ++k) {
          const LabeledInput& s = train[order[k]];
          const bool fx = cfg.flip_augment && (rng() & 1);
          const bool fy = cfg.flip_augment && (rng() & 1);
          const Tensor x = nn::FromImage(Flip(s.input, fx, fy));
          const double logit = net.fc.Forward(net.Features(x, &cache))[0];
          const double p = nn::Sigmoid(logit);
          // Stable BCE from the logit.
          const double loss = std::max(logit, 0.0) - logit * s.label +
                              std::log1p(std::exp(-std::abs(logit)));
          epoch_loss += loss;
          net.Backward(cache, (p - s.label) / n);
        }
        nn::SgdStep(params, CosineLr(step, total_steps, cfg.base_lr), sgd);
        ++step;
      }
      EpochLog log{epoch, epoch_loss / double(train.size()),
                   std::numeric_limits<double>::quiet_NaN()};
      if (!val.empty()) {
        std::vector<metrics::ScoredLabel> pairs;
        for (const auto& v : val) pairs.push_back({model.PredictPrepared(v.input), v.label});
        try {
          log.val_auc = metrics::Auc(pairs);
        } catch (const UndefinedMetricError&) {
        }
      }
      spdlog::info("classifier epoch {}/{} loss {:.4f} val_auc {}", epoch + 1, cfg.epochs, log.loss,
                   std::isnan(log.val_auc) ? "n/a" : fmt::format("{:.4f}", log.val_auc));
      model.curves_.push_back(log);
    }
    return model;
  }
};

ClassifierModel TrainOnInputs(const std::vector<LabeledInput>& train,
                              const std::vector<LabeledInput>& val,
                              const ClassifierTrainConfig& config, InputKind kind) {
  return ClassifierTrainer::Train(train, val, config, kind);
}

namespace {

std::vector<const ImageRecord*> TrainRecords(const DatasetManifest& m) {
  if (m.splits.empty()) {
    std::vector<const ImageRecord*> all;
    for (const auto& r : m.records) all.push_back(&r);
    return all;
  }
  return m.InSplit(Split::kTrain);
}

std::vector<LabeledInput> RoiInputs(const DatasetManifest& m,
                                    const std::vector<const ImageRecord*>& records, int side) {
  std::vector<LabeledInput> out;
  for (const auto* r : records) {
    if (r->rois.empty()) continue;
    const Image img = LoadImage(m.ResolvePath(*r));
    for (const auto& roi : r->rois) {
      if (!roi.label) throw DataError("ROI in '" + r->image_id + "' has no label");
      out.push_back({ExtractCrop(img, roi, side), IsMalignant(*roi.label) ? 1 : 0});
    }
  }
  return out;
}

std::vector<LabeledInput> WholeInputs(const DatasetManifest& m,
                                      const std::vector<const ImageRecord*>& records, int side) {
  std::vector<LabeledInput> out;
  for (const auto* r : records) {
    out.push_back({Resize(LoadImage(m.ResolvePath(*r)), side, side), r->ImageLabel()});
  }
  return out;
}

}  // namespace

ClassifierModel TrainClassifier(const DatasetManifest& manifest,
                                const ClassifierTrainConfig& config) {
  config.Validate();
  const auto train = RoiInputs(manifest, TrainRecords(manifest), config.crop_side);
  const auto val = RoiInputs(manifest, manifest.InSplit(Split::kVal), config.crop_side);
  return TrainOnInputs(train, val, config, InputKind::kRoiCrop);
}

ClassifierModel TrainDirect(const DatasetManifest& manifest,
                            const ClassifierTrainConfig& config) {
  config.Validate();
  const auto train = WholeInputs(manifest, TrainRecords(manifest), config.crop_side);
  const auto val = WholeInputs(manifest, manifest.InSplit(Split::kVal), config.crop_side);
  return TrainOnInputs(train, val, config, InputKind::kWholeImage);
}

}  // namespace dermtriage::classify
