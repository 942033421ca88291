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

#include "dermtriage/detector.h"

#include <algorithm>
#include <array>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <random>
#include <sstream>

#include <spdlog/spdlog.h>

#include "dermtriage/error.h"
#include "dermtriage/hashing.h"
#include "dermtriage/metrics.h"
#include "dermtriage/nn.h"

namespace dermtriage::detection {
namespace fs = std::filesystem;
using nlohmann::json;
using nn::Tensor;

namespace {

constexpr int kLevels = 3;
constexpr int kFpnChannels = 32;
constexpr std::array<int, kLevels> kStrides = {8, 16, 32};
constexpr std::array<std::array<double, 2>, kLevels> kAnchorSizes = {
    {{16, 24}, {32, 48}, {64, 96}}};
constexpr std::array<double, 3> kAspectRatios = {0.5, 1.0, 2.0};  // h / w
constexpr int kAnchorsPerCell = 6;
constexpr double kMaxLogScale = 4.135;  // log(1000 / 16)
constexpr double kSmoothL1Beta = 1.0 / 9.0;
constexpr int kPoolGrid = 2;

struct Anchor {
  double cx, cy, w, h;
  int level;
};

std::vector<Anchor> MakeAnchors(int input_size) {
  std::vector<Anchor> anchors;
  for (int l = 0; l < kLevels; ++l) {
    const int n = input_size / kStrides[l];
    for (int y = 0; y < n; ++y) {
      for (int x = 0; x < n; ++x) {
        for (double size : kAnchorSizes[l]) {
          for (double r : kAspectRatios) {
            anchors.push_back({(x + 0.5) * kStrides[l], (y + 0.5) * kStrides[l],
                               size / std::sqrt(r), size * std::sqrt(r), l});
          }
        }
      }
    }
  }
  return anchors;
}

Roi AnchorRoi(const Anchor& a) { return {a.cx, a.cy, a.w, a.h, std::nullopt}; }

std::array<double, 4> Encode(const Anchor& a, const Roi& gt) {
  return {(gt.x_center - a.cx) / a.w, (gt.y_center - a.cy) / a.h,
          std::log(gt.width / a.w), std::log(gt.height / a.h)};
}

Roi Decode(const Anchor& a, const std::array<double, 4>& d) {
  return {a.cx + d[0] * a.w, a.cy + d[1] * a.h,
          a.w * std::exp(std::min(d[2], kMaxLogScale)),
          a.h * std::exp(std::min(d[3], kMaxLogScale)), std::nullopt};
}

}  // namespace

// Backbone of five stride-2 convolutions, lateral 1x1 projections of the
// last three stages merged top-down into a three-level pyramid, and a
// shared 3x3 head with per-anchor class logits (C + background) and box
// offsets.
struct DetectorModel::Net {
  int num_classes;
  int input_size;
  std::array<nn::Conv2d, 5> stages;
  std::array<nn::Conv2d, kLevels> laterals;
  nn::Conv2d head, cls, box;

  Net(int c, int input)
      : num_classes(c),
        input_size(input),
        stages{nn::Conv2d("stage1", 3, 16, 3, 2, 1), nn::Conv2d("stage2", 16, 32, 3, 2, 1),
               nn::Conv2d("stage3", 32, 48, 3, 2, 1), nn::Conv2d("stage4", 48, 64, 3, 2, 1),
               nn::Conv2d("stage5", 64, 64, 3, 2, 1)},
        laterals{nn::Conv2d("lateral3", 48, kFpnChannels, 1, 1, 0),
                 nn::Conv2d("lateral4", 64, kFpnChannels, 1, 1, 0),
                 nn::Conv2d("lateral5", 64, kFpnChannels, 1, 1, 0)},
        head("head", kFpnChannels, kFpnChannels, 3, 1, 1),
        cls("cls", kFpnChannels, kAnchorsPerCell * (c + 1), 1, 1, 0),
        box("box", kFpnChannels, kAnchorsPerCell * 4, 1, 1, 0) {}

  std::vector<nn::Param*> Params() {
    std::vector<nn::Param*> p;
    auto add = [&](nn::Conv2d& conv) {
      p.push_back(&conv.weight);
      p.push_back(&conv.bias);
    };
    for (auto& s : stages) add(s);
    for (auto& l : laterals) add(l);
    add(head);
    add(cls);
    add(box);
    return p;
  }

  void Init(std::mt19937_64& rng) {
    for (auto& s : stages) s.Init(rng);
    for (auto& l : laterals) l.Init(rng);
    head.Init(rng);
    std::normal_distribution<double> small(0.0, 0.01);
    for (auto* conv : {&cls, &box}) {
      for (auto& w : conv->weight.value) w = float(small(rng));
      std::fill(conv->bias.value.begin(), conv->bias.value.end(), 0.f);
    }
    // Start with a background prior so early losses are dominated by the
    // few positives rather than the flood of easy negatives.
    for (int a = 0; a < kAnchorsPerCell; ++a) cls.bias.value[a * (num_classes + 1)] = 2.0f;
  }

  struct Cache {
    Tensor input;
    std::array<Tensor, 5> acts;
    std::array<std::vector<float>, 5> stage_cols;
    std::array<std::vector<float>, kLevels> lateral_cols;
    std::array<Tensor, kLevels> pyramid;
    std::array<std::vector<float>, kLevels> head_cols, cls_cols, box_cols;
    std::array<Tensor, kLevels> hidden;
  };

  struct Output {
    std::array<Tensor, kLevels> cls, box, pyramid;
  };

  Output Forward(const Tensor& x, Cache* cache) const {
    std::array<Tensor, 5> acts;
    const Tensor* in = &x;
    for (int i = 0; i < 5; ++i) {
      acts[i] = stages[i].Forward(*in, cache ? &cache->stage_cols[i] : nullptr);
      nn::ReluInPlace(acts[i]);
      in = &acts[i];
    }
    Output out;
    // Pyramid levels 0..2 read backbone stages 3..5 (indices 2..4).
    for (int l = kLevels - 1; l >= 0; --l) {
      Tensor lat = laterals[l].Forward(acts[l + 2], cache ? &cache->lateral_cols[l] : nullptr);
      if (l + 1 < kLevels) {
        const Tensor up = nn::Upsample2x(out.pyramid[l + 1], lat.height, lat.width);
        for (std::size_t i = 0; i < lat.size(); ++i) lat.data[i] += up.data[i];
      }
      out.pyramid[l] = std::move(lat);
    }
    for (int l = 0; l < kLevels; ++l) {
      Tensor h = head.Forward(out.pyramid[l], cache ? &cache->head_cols[l] : nullptr);
      nn::ReluInPlace(h);
      out.cls[l] = cls.Forward(h, cache ? &cache->cls_cols[l] : nullptr);
      out.box[l] = box.Forward(h, cache ? &cache->box_cols[l] : nullptr);
      if (cache) cache->hidden[l] = std::move(h);
    }
    if (cache) {
      cache->input = x;
      cache->acts = std::move(acts);
      cache->pyramid = out.pyramid;
    }
    return out;
  }

  void Backward(const Cache& c, const std::array<Tensor, kLevels>& dcls,
                const std::array<Tensor, kLevels>& dbox) {
    std::array<Tensor, kLevels> dpyr;
    for (int l = 0; l < kLevels; ++l) {
      Tensor dh = cls.Backward(c.hidden[l], c.cls_cols[l], dcls[l], true);
      const Tensor dh2 = box.Backward(c.hidden[l], c.box_cols[l], dbox[l], true);
      for (std::size_t i = 0; i < dh.size(); ++i) dh.data[i] += dh2.data[i];
      nn::ReluBackward(c.hidden[l], dh);
      dpyr[l] = head.Backward(c.pyramid[l], c.head_cols[l], dh, true);
    }
    std::array<Tensor, 5> dacts;
    for (int i = 0; i < 5; ++i) {
      dacts[i] = Tensor(c.acts[i].channels, c.acts[i].height, c.acts[i].width);
    }
    for (int l = 0; l < kLevels; ++l) {
      if (l + 1 < kLevels) {
        const Tensor up = nn::Upsample2xBackward(dpyr[l], c.pyramid[l + 1].height,
                                                 c.pyramid[l + 1].width);
        for (std::size_t i = 0; i < up.size(); ++i) dpyr[l + 1].data[i] += up.data[i];
      }
    }
    for (int l = 0; l < kLevels; ++l) {
      const Tensor d = laterals[l].Backward(c.acts[l + 2], c.lateral_cols[l], dpyr[l], true);
      for (std::size_t i = 0; i < d.size(); ++i) dacts[l + 2].data[i] += d.data[i];
    }
    for (int i = 4; i >= 0; --i) {
      nn::ReluBackward(c.acts[i], dacts[i]);
      const Tensor& in = i == 0 ? c.input : c.acts[i - 1];
      Tensor d = stages[i].Backward(in, c.stage_cols[i], dacts[i], i > 0);
      if (i > 0) {
        for (std::size_t k = 0; k < d.size(); ++k) dacts[i - 1].data[k] += d.data[k];
      }
    }
  }
};

std::string GranularityName(Granularity g) {
  switch (g) {
    case Granularity::kOneClass: return "one_class";
    case Granularity::kMalignancy: return "malignancy";
    case Granularity::kSubType: return "sub_type";
  }
  return "";
}

Granularity ParseGranularity(const std::string& s) {
  for (Granularity g : {Granularity::kOneClass, Granularity::kMalignancy, Granularity::kSubType}) {
    if (GranularityName(g) == s) return g;
  }
  throw SchemaError("unknown granularity '" + s + "'");
}

GranularityConfig GranularityConfig::Make(Granularity kind) {
  GranularityConfig g;
  g.kind = kind;
  switch (kind) {
    case Granularity::kOneClass: g.class_names = {"lesion"}; break;
    case Granularity::kMalignancy: g.class_names = {"benign", "malignant"}; break;
    case Granularity::kSubType:
      for (LesionLabel l : kAllLesionLabels) g.class_names.emplace_back(LabelName(l));
      break;
  }
  return g;
}

int GranularityConfig::ClassOf(LesionLabel label) const {
  switch (kind) {
    case Granularity::kOneClass: return 0;
    case Granularity::kMalignancy: return IsMalignant(label) ? 1 : 0;
    case Granularity::kSubType: return LabelIndex(label);
  }
  return 0;
}

std::vector<int> GranularityConfig::MalignantClasses() const {
  switch (kind) {
    case Granularity::kOneClass: return {};
    case Granularity::kMalignancy: return {1};
    case Granularity::kSubType: {
      std::vector<int> out;
      for (LesionLabel l : kAllLesionLabels) {
        if (IsMalignant(l)) out.push_back(LabelIndex(l));
      }
      return out;
    }
  }
  return {};
}

json DetectionToJson(const Detection& d) {
  return {{"image_id", d.source_image_id},
          {"box", {{"x_center", d.box.x_center}, {"y_center", d.box.y_center},
                   {"width", d.box.width}, {"height", d.box.height}}},
          {"class_probs", d.class_probs},
          {"score", d.score},
          {"model_id", d.model_id}};
}

Detection DetectionFromJson(const json& j) {
  try {
    Detection d;
    d.source_image_id = j.at("image_id").get<std::string>();
    const json& b = j.at("box");
    d.box = {b.at("x_center").get<double>(), b.at("y_center").get<double>(),
             b.at("width").get<double>(), b.at("height").get<double>(), std::nullopt};
    d.class_probs = j.at("class_probs").get<std::vector<double>>();
    d.score = j.at("score").get<double>();
    d.model_id = j.value("model_id", "");
    return d;
  } catch (const json::exception& e) {
    throw SchemaError(std::string("detection record: ") + e.what());
  }
}

void DetectorTrainConfig::Validate() const {
  if (total_steps <= 0) throw ConfigError("total_steps must be positive");
  if (!(base_lr > 0)) throw ConfigError("base_lr must be positive");
  for (std::size_t i = 0; i < decay_steps.size(); ++i) {
    if (decay_steps[i] > total_steps || (i > 0 && decay_steps[i] <= decay_steps[i - 1])) {
      throw ConfigError("decay_steps must be strictly increasing and <= total_steps");
    }
  }
  if (rpn_batch <= 0) throw ConfigError("rpn_batch must be positive");
  if (nms_iou < 0 || nms_iou > 1) throw ConfigError("nms_iou must lie in [0, 1]");
  if (score_threshold < 0 || score_threshold > 1) {
    throw ConfigError("score_threshold must lie in [0, 1]");
  }
  if (max_detections <= 0) throw ConfigError("max_detections must be positive");
  if (input_size % 32 != 0 || input_size < 64) {
    throw ConfigError("input_size must be a multiple of 32 and >= 64");
  }
}

DetectorTrainConfig DetectorTrainConfig::Scaled(double factor) const {
  if (!(factor > 0)) throw ConfigError("schedule scale factor must be positive");
  DetectorTrainConfig c = *this;
  c.total_steps = std::max(1, int(std::lround(total_steps * factor)));
  for (auto& s : c.decay_steps) s = std::max(1, int(std::lround(s * factor)));
  return c;
}

json DetectorTrainConfig::ToJson() const {
  return {{"total_steps", total_steps}, {"base_lr", base_lr},
          {"momentum", momentum},       {"weight_decay", weight_decay},
          {"decay_steps", decay_steps}, {"decay_factor", decay_factor},
          {"rpn_batch", rpn_batch},     {"positive_fraction", positive_fraction},
          {"nms_iou", nms_iou},         {"score_threshold", score_threshold},
          {"max_detections", max_detections}, {"input_size", input_size},
          {"fg_iou", fg_iou},           {"bg_iou", bg_iou},
          {"flip_augment", flip_augment}, {"seed", seed}};
}

DetectorTrainConfig DetectorTrainConfig::FromJson(const json& j) {
  DetectorTrainConfig c;
  try {
    c.total_steps = j.value("total_steps", c.total_steps);
    c.base_lr = j.value("base_lr", c.base_lr);
    c.momentum = j.value("momentum", c.momentum);
    c.weight_decay = j.value("weight_decay", c.weight_decay);
    c.decay_steps = j.value("decay_steps", c.decay_steps);
    c.decay_factor = j.value("decay_factor", c.decay_factor);
    c.rpn_batch = j.value("rpn_batch", c.rpn_batch);
    c.positive_fraction = j.value("positive_fraction", c.positive_fraction);
    c.nms_iou = j.value("nms_iou", c.nms_iou);
    c.score_threshold = j.value("score_threshold", c.score_threshold);
    c.max_detections = j.value("max_detections", c.max_detections);
    c.input_size = j.value("input_size", c.input_size);
    c.fg_iou = j.value("fg_iou", c.fg_iou);
    c.bg_iou = j.value("bg_iou", c.bg_iou);
    c.flip_augment = j.value("flip_augment", c.flip_augment);
    c.seed = j.value("seed", c.seed);
  } catch (const json::exception& e) {
    throw SchemaError(std::string("detector config: ") + e.what());
  }
  c.Validate();
  return c;
}

double StepLr(const DetectorTrainConfig& config, int step) {
  double lr = config.base_lr;
  for (int b : config.decay_steps) {
    if (step >= b) lr *= config.decay_factor;
  }
  return lr;
}

std::vector<Detection> Nms(std::vector<Detection> detections, double iou_threshold) {
  if (iou_threshold < 0 || iou_threshold > 1) throw ConfigError("NMS IoU must lie in [0, 1]");
  std::stable_sort(detections.begin(), detections.end(),
                   [](const Detection& a, const Detection& b) { return a.score > b.score; });
  std::vector<Detection> kept;
  for (auto& d : detections) {
    const bool suppressed = std::any_of(kept.begin(), kept.end(), [&](const Detection& k) {
      return metrics::Iou(k.box, d.box) >= iou_threshold;
    });
    if (!suppressed) kept.push_back(std::move(d));
  }
  return kept;
}

DetectorModel::DetectorModel(GranularityConfig granularity, DetectorTrainConfig config)
    : granularity_(std::move(granularity)),
      config_(std::move(config)),
      net_(std::make_unique<Net>(granularity_.num_classes(), config_.input_size)) {
  config_.Validate();
  std::mt19937_64 rng(config_.seed);
  net_->Init(rng);
  RefreshId();
}

DetectorModel::~DetectorModel() = default;
DetectorModel::DetectorModel(DetectorModel&&) noexcept = default;
DetectorModel& DetectorModel::operator=(DetectorModel&&) noexcept = default;

void DetectorModel::RefreshId() {
  std::string bytes = GranularityName(granularity_.kind);
  for (const nn::Param* p : net_->Params()) {
    bytes.append(reinterpret_cast<const char*>(p->value.data()), p->value.size() * sizeof(float));
  }
  id_ = Sha256Hex(bytes).substr(0, 16);
}

std::size_t DetectorModel::num_params() const {
  return nn::CountParams(net_->Params(), false);
}

int DetectorModel::feature_size() const { return kFpnChannels * kPoolGrid * kPoolGrid; }

namespace {

struct Prepared {
  Tensor input;
  double scale_x, scale_y;
};

Prepared Prepare(const Image& image, int input_size) {
  if (image.empty()) throw DecodeError("empty image");
  return {nn::FromImage(Resize(image, input_size, input_size)),
          double(image.width) / input_size, double(image.height) / input_size};
}

// Softmax over the C+1 logits of one anchor; returns foreground terms.
std::vector<double> AnchorProbs(const Tensor& cls, int a, int y, int x, int num_classes) {
  const int base = a * (num_classes + 1);
  double mx = -1e300;
  for (int k = 0; k <= num_classes; ++k) mx = std::max(mx, double(cls.at(base + k, y, x)));
  std::vector<double> e(num_classes + 1);
  double sum = 0;
  for (int k = 0; k <= num_classes; ++k) sum += e[k] = std::exp(cls.at(base + k, y, x) - mx);
  std::vector<double> probs(num_classes);
  for (int k = 0; k < num_classes; ++k) {
    // Keep strictly inside (0, 1).
    probs[k] = std::clamp(e[k + 1] / sum, 1e-12, 1 - 1e-12);
  }
  return probs;
}

}  // namespace

std::vector<Detection> DetectorModel::RawDetections(const Image& image,
                                                    const std::string& image_id) const {
  const Prepared prep = Prepare(image, config_.input_size);
  const Net::Output out = net_->Forward(prep.input, nullptr);
  const int c = granularity_.num_classes();
  std::vector<Detection> dets;
  const std::vector<Anchor> anchors = MakeAnchors(config_.input_size);
  std::size_t idx = 0;
  for (int l = 0; l < kLevels; ++l) {
    const int n = config_.input_size / kStrides[l];
    for (int y = 0; y < n; ++y) {
      for (int x = 0; x < n; ++x) {
        for (int a = 0; a < kAnchorsPerCell; ++a, ++idx) {
          Detection d;
          d.class_probs = AnchorProbs(out.cls[l], a, y, x, c);
          d.score = *std::max_element(d.class_probs.begin(), d.class_probs.end());
          std::array<double, 4> delta;
          for (int j = 0; j < 4; ++j) delta[j] = out.box[l].at(a * 4 + j, y, x);
          Roi r = Decode(anchors[idx], delta);
          r.x_center *= prep.scale_x;
          r.width *= prep.scale_x;
          r.y_center *= prep.scale_y;
          r.height *= prep.scale_y;
          auto clamped = ClampToImage(r, image.width, image.height);
          if (!clamped) continue;
          d.box = *clamped;
          d.source_image_id = image_id;
          d.model_id = id_;
          dets.push_back(std::move(d));
        }
      }
    }
  }
  return dets;
}

std::vector<Detection> DetectorModel::Detect(const Image& image,
                                             const std::string& image_id) const {
  std::vector<Detection> raw = RawDetections(image, image_id);
  std::erase_if(raw, [&](const Detection& d) { return d.score < config_.score_threshold; });
  std::vector<Detection> kept = Nms(std::move(raw), config_.nms_iou);
  if (int(kept.size()) > config_.max_detections) kept.resize(config_.max_detections);
  return kept;
}

std::vector<std::vector<float>> DetectorModel::ExportFeatures(
    const Image& image, const std::vector<Detection>& detections) const {
  if (detections.empty()) return {};
  for (const auto& d : detections) {
    if (d.model_id != id_ || int(d.class_probs.size()) != granularity_.num_classes()) {
      throw ModelError("detection was not produced by model " + id_);
    }
  }
  const Prepared prep = Prepare(image, config_.input_size);
  const Net::Output out = net_->Forward(prep.input, nullptr);
  std::vector<std::vector<float>> features;
  for (const auto& d : detections) {
    // Box in network input coordinates; level chosen by box size.
    const double x1 = (d.box.x_center - d.box.width / 2) / prep.scale_x;
    const double y1 = (d.box.y_center - d.box.height / 2) / prep.scale_y;
    const double w = d.box.width / prep.scale_x, h = d.box.height / prep.scale_y;
    const double size = std::sqrt(w * h);
    const int level = size < 32 ? 0 : size < 64 ? 1 : 2;
    const Tensor& fmap = out.pyramid[level];
    const double stride = kStrides[level];
    std::vector<float> f(feature_size(), 0.f);
    for (int gy = 0; gy < kPoolGrid; ++gy) {
      for (int gx = 0; gx < kPoolGrid; ++gx) {
        int cx0 = int(std::floor((x1 + w * gx / kPoolGrid) / stride));
        int cx1 = int(std::ceil((x1 + w * (gx + 1) / kPoolGrid) / stride));
        int cy0 = int(std::floor((y1 + h * gy / kPoolGrid) / stride));
        int cy1 = int(std::ceil((y1 + h * (gy + 1) / kPoolGrid) / stride));
        cx0 = std::clamp(cx0, 0, fmap.width - 1);
        cy0 = std::clamp(cy0, 0, fmap.height - 1);
        cx1 = std::clamp(cx1, cx0 + 1, fmap.width);
        cy1 = std::clamp(cy1, cy0 + 1, fmap.height);
        const double cells = double(cx1 - cx0) * (cy1 - cy0);
        for (int ch = 0; ch < kFpnChannels; ++ch) {
          double acc = 0;
          for (int y = cy0; y < cy1; ++y) {
            for (int x = cx0; x < cx1; ++x) acc += fmap.at(ch, y, x);
          }
          f[(ch * kPoolGrid + gy) * kPoolGrid + gx] = float(acc / cells);
        }
      }
    }
    features.push_back(std::move(f));
  }
  return features;
}

void DetectorModel::Save(const std::string& dir) const {
  fs::create_directories(dir);
  std::vector<const nn::Param*> params;
  for (nn::Param* p : net_->Params()) params.push_back(p);
  nn::WriteParams(params, (fs::path(dir) / "weights.bin").string());
  json meta = {{"type", "detector"},
               {"backend", "anchor_fpn_v1"},
               {"model_id", id_},
               {"granularity", GranularityName(granularity_.kind)},
               {"class_names", granularity_.class_names},
               {"class_probs", "softmax over C classes plus background; foreground terms"},
               {"config", config_.ToJson()},
               {"anchor_sizes", kAnchorSizes},
               {"aspect_ratios", kAspectRatios},
               {"pyramid_strides", kStrides},
               {"feature_size", feature_size()},
               {"training_log", training_log_.empty() ? "" : "training_log.csv"}};
  std::ofstream((fs::path(dir) / "model.json").string()) << meta.dump(2) << "\n";
  if (!training_log_.empty()) {
    std::ofstream((fs::path(dir) / "training_log.csv").string()) << training_log_;
  }
}

DetectorModel DetectorModel::Load(const std::string& dir) {
  std::ifstream in((fs::path(dir) / "model.json").string());
  if (!in) throw ModelError("no detector checkpoint in '" + dir + "'");
  json meta;
  try {
    meta = json::parse(in);
  } catch (const json::parse_error& e) {
    throw ModelError(std::string("detector metadata: ") + e.what());
  }
  if (meta.value("type", "") != "detector") throw ModelError("'" + dir + "' is not a detector");
  DetectorModel m(GranularityConfig::Make(ParseGranularity(meta.at("granularity"))),
                  DetectorTrainConfig::FromJson(meta.at("config")));
  nn::ReadParams(m.net_->Params(), (fs::path(dir) / "weights.bin").string());
  m.RefreshId();
  m.training_log_ = meta.value("training_log", "");
  return m;
}

class DetectorTrainer {
 public:
  static DetectorModel Train(const DatasetManifest& manifest, const GranularityConfig& gran,
                             const DetectorTrainConfig& cfg, std::vector<TrainStepLog>* log);
};

DetectorModel DetectorTrainer::Train(const DatasetManifest& manifest,
                                     const GranularityConfig& gran,
                                     const DetectorTrainConfig& cfg,
                                     std::vector<TrainStepLog>* log) {
  using Net = DetectorModel::Net;
  cfg.Validate();
  std::vector<const ImageRecord*> records = manifest.InSplit(Split::kTrain);
  if (manifest.splits.empty()) {
    for (const auto& r : manifest.records) records.push_back(&r);
  }
  if (records.empty()) throw DataError("detector training split is empty");
  const bool needs_labels = gran.kind != Granularity::kOneClass;
  for (const auto* r : records) {
    for (const auto& roi : r->rois) {
      if (needs_labels && !roi.label) {
        throw DataError("ROI in '" + r->image_id + "' has no label under granularity " +
                        GranularityName(gran.kind));
      }
    }
  }

  // Resized training images and targets in network-input coordinates.
  struct Sample {
    Image image;
    std::vector<Roi> boxes;
    std::vector<int> classes;
  };
  std::vector<Sample> samples;
  for (const auto* r : records) {
    Image img = LoadImage(manifest.ResolvePath(*r));
    const double sx = double(cfg.input_size) / img.width, sy = double(cfg.input_size) / img.height;
    Sample s{Resize(img, cfg.input_size, cfg.input_size), {}, {}};
    for (const auto& roi : r->rois) {
      s.boxes.push_back({roi.x_center * sx, roi.y_center * sy, roi.width * sx,
                         roi.height * sy, std::nullopt});
      s.classes.push_back(roi.label ? gran.ClassOf(*roi.label) : 0);
    }
    samples.push_back(std::move(s));
  }

  DetectorModel model(gran, cfg);
  Net& net = *model.net_;
  const std::vector<nn::Param*> params = net.Params();
  const std::vector<Anchor> anchors = MakeAnchors(cfg.input_size);
  const int c = gran.num_classes();
  std::mt19937_64 rng(cfg.seed + 1);
  std::vector<std::size_t> order(samples.size());
  std::iota(order.begin(), order.end(), 0);
  std::size_t cursor = order.size();
  const nn::SgdConfig sgd{cfg.momentum, cfg.weight_decay};
  std::ostringstream csv;
  csv << "step,lr,loss,cls_loss,box_loss\n";
  Net::Cache cache;

  for (int step = 0; step < cfg.total_steps; ++step) {
    if (cursor == order.size()) {
      std::shuffle(order.begin(), order.end(), rng);
      cursor = 0;
    }
    const Sample& s = samples[order[cursor++]];
    const bool flip_x = cfg.flip_augment && (rng() & 1);
    const bool flip_y = cfg.flip_augment && (rng() & 1);
    Image img = s.image;
    std::vector<Roi> boxes = s.boxes;
    if (flip_x || flip_y) {
      Image f(img.width, img.height);
      for (int y = 0; y < img.height; ++y) {
        for (int x = 0; x < img.width; ++x) {
          const int sx = flip_x ? img.width - 1 - x : x;
          const int sy = flip_y ? img.height - 1 - y : y;
          for (int ch = 0; ch < 3; ++ch) f.at(x, y, ch) = img.at(sx, sy, ch);
        }
      }
      img = std::move(f);
      for (auto& b : boxes) {
        if (flip_x) b.x_center = cfg.input_size - b.x_center;
        if (flip_y) b.y_center = cfg.input_size - b.y_center;
      }
    }

    // Anchor labels: -1 ignore, 0 background, k+1 class k.
    std::vector<int> target(anchors.size(), -1);
    std::vector<int> matched(anchors.size(), -1);
    std::vector<double> best_for_gt(boxes.size(), 0.0);
    std::vector<double> anchor_iou(anchors.size() * std::max<std::size_t>(1, boxes.size()), 0.0);
    for (std::size_t i = 0; i < anchors.size(); ++i) {
      double best = 0;
      for (std::size_t g = 0; g < boxes.size(); ++g) {
        const double v = metrics::Iou(AnchorRoi(anchors[i]), boxes[g]);
        anchor_iou[i * boxes.size() + g] = v;
        best_for_gt[g] = std::max(best_for_gt[g], v);
        if (v > best) {
          best = v;
          matched[i] = int(g);
        }
      }
      if (best < cfg.bg_iou) target[i] = 0;
      if (best >= cfg.fg_iou) target[i] = s.classes[matched[i]] + 1;
    }
    // Every ground truth keeps its best-overlapping anchors.
    for (std::size_t g = 0; g < boxes.size(); ++g) {
      if (best_for_gt[g] <= 0) continue;
      for (std::size_t i = 0; i < anchors.size(); ++i) {
        if (anchor_iou[i * boxes.size() + g] == best_for_gt[g]) {
          target[i] = s.classes[g] + 1;
          matched[i] = int(g);
        }
      }
    }
    std::vector<std::size_t> pos, neg;
    for (std::size_t i = 0; i < anchors.size(); ++i) {
      if (target[i] > 0) pos.push_back(i);
      if (target[i] == 0) neg.push_back(i);
    }
    std::shuffle(pos.begin(), pos.end(), rng);
    std::shuffle(neg.begin(), neg.end(), rng);
    const std::size_t max_pos = std::size_t(cfg.rpn_batch * cfg.positive_fraction);
    if (pos.size() > max_pos) pos.resize(max_pos);
    if (neg.size() > cfg.rpn_batch - pos.size()) neg.resize(cfg.rpn_batch - pos.size());

    const Net::Output out = net.Forward(nn::FromImage(img), &cache);
    std::array<Tensor, kLevels> dcls, dbox;
    for (int l = 0; l < kLevels; ++l) {
      dcls[l] = Tensor(out.cls[l].channels, out.cls[l].height, out.cls[l].width);
      dbox[l] = Tensor(out.box[l].channels, out.box[l].height, out.box[l].width);
    }
    // Anchor index -> (level, y, x, a).
    auto locate = [&](std::size_t idx, int* l, int* y, int* x, int* a) {
      std::size_t rem = idx;
      for (int lv = 0; lv < kLevels; ++lv) {
        const std::size_t n = cfg.input_size / kStrides[lv];
        const std::size_t count = n * n * kAnchorsPerCell;
        if (rem < count) {
          *l = lv;
          *a = int(rem % kAnchorsPerCell);
          *x = int((rem / kAnchorsPerCell) % n);
          *y = int(rem / kAnchorsPerCell / n);
          return;
        }
        rem -= count;
      }
    };
    // Positives and negatives each carry half of the classification loss.
    const double pos_weight = pos.empty() ? 0.0 : 0.5 / double(pos.size());
    const double neg_weight = neg.empty() ? 0.0 : (pos.empty() ? 1.0 : 0.5) / double(neg.size());
    double cls_loss = 0, box_loss = 0;
    auto add_cls = [&](std::size_t i) {
      const double w = target[i] > 0 ? pos_weight : neg_weight;
      int l = 0, y = 0, x = 0, a = 0;
      locate(i, &l, &y, &x, &a);
      const int base = a * (c + 1);
      double mx = -1e300;
      for (int k = 0; k <= c; ++k) mx = std::max(mx, double(out.cls[l].at(base + k, y, x)));
      std::vector<double> p(c + 1);
      double sum = 0;
      for (int k = 0; k <= c; ++k) sum += p[k] = std::exp(out.cls[l].at(base + k, y, x) - mx);
      for (auto& v : p) v /= sum;
      cls_loss -= std::log(std::max(p[target[i]], 1e-12)) * w;
      for (int k = 0; k <= c; ++k) {
        dcls[l].at(base + k, y, x) += float((p[k] - (k == target[i] ? 1.0 : 0.0)) * w);
      }
    };
    for (std::size_t i : pos) add_cls(i);
    for (std::size_t i : neg) add_cls(i);
    const double pos_norm = std::max<double>(1.0, double(pos.size()));
    for (std::size_t i : pos) {
      int l = 0, y = 0, x = 0, a = 0;
      locate(i, &l, &y, &x, &a);
      const auto t = Encode(anchors[i], boxes[matched[i]]);
      for (int j = 0; j < 4; ++j) {
        const double diff = out.box[l].at(a * 4 + j, y, x) - t[j];
        const double ad = std::abs(diff);
        box_loss += (ad < kSmoothL1Beta ? 0.5 * diff * diff / kSmoothL1Beta
                                        : ad - 0.5 * kSmoothL1Beta) / pos_norm;
        const double g = ad < kSmoothL1Beta ? diff / kSmoothL1Beta : (diff > 0 ? 1.0 : -1.0);
        dbox[l].at(a * 4 + j, y, x) += float(g / pos_norm);
      }
    }
    net.Backward(cache, dcls, dbox);
    const double lr = StepLr(cfg, step);
    nn::SgdStep(params, lr, sgd);
    csv << step << ',' << lr << ',' << cls_loss + box_loss << ',' << cls_loss << ','
        << box_loss << '\n';
    if (log) log->push_back({step, lr, cls_loss + box_loss, cls_loss, box_loss});
    if (step % 500 == 0 || step + 1 == cfg.total_steps) {
      spdlog::info("detector step {}/{} lr {:.2e} loss {:.4f} (cls {:.4f} box {:.4f})", step,
                   cfg.total_steps, lr, cls_loss + box_loss, cls_loss, box_loss);
    }
  }
  model.RefreshId();
  model.training_log_ = csv.str();
  return model;
}

DetectorModel TrainDetector(const DatasetManifest& manifest, const GranularityConfig& granularity,
                            const DetectorTrainConfig& config, std::vector<TrainStepLog>* log) {
  return DetectorTrainer::Train(manifest, granularity, config, log);
}

void WriteDetectionsJsonl(const std::vector<Detection>& detections, std::ostream& out) {
  for (const auto& d : detections) out << DetectionToJson(d).dump() << '\n';
}

std::vector<Detection> ReadDetectionsJsonl(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw SchemaError("cannot open detections '" + path + "'");
  std::vector<Detection> out;
  std::string line;
  int n = 0;
  while (std::getline(in, line)) {
    ++n;
    if (line.empty()) continue;
    try {
      out.push_back(DetectionFromJson(json::parse(line)));
    } catch (const json::parse_error& e) {
      throw SchemaError(path + ":" + std::to_string(n) + ": " + e.what());
    }
  }
  return out;
}

}  // namespace dermtriage::detection
