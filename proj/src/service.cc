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

#include "dermtriage/service.h"

#include <filesystem>
#include <fstream>
#include <set>
#include <thread>

#include <httplib.h>
#include <spdlog/spdlog.h>

#include "dermtriage/error.h"
#include "dermtriage/manifest.h"

namespace dermtriage::service {
namespace fs = std::filesystem;
using nlohmann::json;
using scoring::AggregationKind;
using scoring::StrategyKind;

namespace {

json ModelEntry(const detection::DetectorModel* d) {
  if (!d) return nullptr;
  return {{"model_id", d->id()},
          {"granularity", detection::GranularityName(d->granularity().kind)},
          {"classes", d->granularity().class_names},
          {"parameters", d->num_params()}};
}

json ModelEntry(const classify::ClassifierModel* c) {
  if (!c) return nullptr;
  return {{"input", c->input_kind() == classify::InputKind::kRoiCrop ? "roi_crop" : "whole_image"},
          {"crop_side", c->config().crop_side},
          {"parameters", c->num_params()}};
}

json RoiJson(const Roi& r) {
  return {{"x_center", r.x_center}, {"y_center", r.y_center},
          {"width", r.width}, {"height", r.height}};
}

Roi ParseRoi(const json& j) {
  try {
    Roi r{j.at("x_center").get<double>(), j.at("y_center").get<double>(),
          j.at("width").get<double>(), j.at("height").get<double>(), std::nullopt};
    if (!(r.width > 0) || !(r.height > 0)) throw SchemaError("roi width and height must be > 0");
    return r;
  } catch (const json::exception& e) {
    throw SchemaError(std::string("roi: ") + e.what());
  }
}

json ParseJsonField(const std::string& text, const std::string& field) {
  try {
    return json::parse(text);
  } catch (const json::parse_error& e) {
    throw SchemaError("field '" + field + "' is not valid JSON: " + e.what());
  }
}

std::string FormField(const httplib::Request& req, const std::string& key) {
  if (req.has_file(key)) return req.get_file_value(key).content;
  if (req.has_param(key)) return req.get_param_value(key);
  return "";
}

Image UploadedImage(const httplib::Request& req) {
  if (!req.has_file("image")) throw SchemaError("multipart field 'image' is required");
  const std::string& bytes = req.get_file_value("image").content;
  return DecodeImage(std::span<const std::uint8_t>(
      reinterpret_cast<const std::uint8_t*>(bytes.data()), bytes.size()));
}

void Reply(httplib::Response& res, int status, const json& body) {
  res.status = status;
  res.set_content(body.dump(), "application/json");
}

}  // namespace

json ServiceModels::Info() const {
  json strategies = json::array();
  if (direct) strategies.push_back("direct");
  if (one_class && classifier) strategies.push_back("two_stage");
  if (malignancy) strategies.push_back("one_step_malignancy");
  if (subtype) strategies.push_back("one_step_subtype");
  json aggregators = json::array();
  for (AggregationKind k : scoring::kAllAggregations) aggregators.push_back(scoring::AggregationName(k));
  json combined_info = nullptr;
  if (combined) {
    combined_info = {{"covariate_schema", combined->schema().ToJson()},
                     {"trainable_parameters", combined->trainable_params()}};
  }
  return {{"detector_one_class", ModelEntry(one_class.get())},
          {"classifier", ModelEntry(classifier.get())},
          {"detector_malignancy", ModelEntry(malignancy.get())},
          {"detector_subtype", ModelEntry(subtype.get())},
          {"direct", ModelEntry(direct.get())},
          {"combined", combined_info},
          {"strategies", strategies},
          {"aggregators", aggregators}};
}

AnnotationStore::AnnotationStore(std::string dir) : dir_(std::move(dir)) {
  fs::create_directories(dir_);
  std::ifstream in(fs::path(dir_) / "revisions.jsonl");
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty()) revisions_.push_back(json::parse(line));
  }
}

json AnnotationStore::Append(const json& doc) {
  json wrapped = doc.is_object() && doc.contains("images") ? doc : json{{"images", {doc}}};
  // Validation only; records are stored in canonical (clamped) form.
  const DatasetManifest parsed = ParseManifest(wrapped, dir_);
  const json canonical = ManifestToJson(parsed)["images"];
  std::lock_guard lock(mu_);
  json ids = json::array();
  std::ofstream out(fs::path(dir_) / "revisions.jsonl", std::ios::app);
  for (const json& rec : canonical) {
    json entry = {{"revision", revisions_.size() + 1}, {"record", rec}};
    out << entry.dump() << "\n";
    revisions_.push_back(entry);
    ids.push_back({{"image_id", rec["image_id"]}, {"revision", entry["revision"]}});
  }
  out.flush();
  Rewrite();
  return ids;
}

json AnnotationStore::Current() const {
  std::lock_guard lock(mu_);
  std::vector<std::string> order;
  std::map<std::string, json> latest;
  for (const json& r : revisions_) {
    const std::string id = r["record"]["image_id"];
    if (!latest.count(id)) order.push_back(id);
    latest[id] = r["record"];
  }
  json images = json::array();
  for (const auto& id : order) images.push_back(latest[id]);
  return {{"images", images}};
}

json AnnotationStore::History(const std::string& image_id) const {
  std::lock_guard lock(mu_);
  json out = json::array();
  for (const json& r : revisions_) {
    if (r["record"]["image_id"] == image_id) out.push_back(r);
  }
  return {{"image_id", image_id}, {"revisions", out}};
}

void AnnotationStore::Rewrite() const {
  std::vector<std::string> order;
  std::map<std::string, json> latest;
  for (const json& r : revisions_) {
    const std::string id = r["record"]["image_id"];
    if (!latest.count(id)) order.push_back(id);
    latest[id] = r["record"];
  }
  json images = json::array();
  for (const auto& id : order) images.push_back(latest[id]);
  const fs::path tmp = fs::path(dir_) / "manifest.json.tmp";
  std::ofstream(tmp) << json{{"images", images}}.dump(2) << "\n";
  fs::rename(tmp, fs::path(dir_) / "manifest.json");
}

struct Service::Impl {
  ServiceOptions options;
  AnnotationStore annotations;
  httplib::Server server;
  std::thread thread;
  mutable std::mutex mu;
  std::shared_ptr<const ServiceModels> models;

  explicit Impl(ServiceOptions o) : options(std::move(o)), annotations(options.annotation_dir) {
    Routes();
  }

  std::shared_ptr<const ServiceModels> Models() const {
    std::lock_guard lock(mu);
    return models;
  }

  // Runs `body`, translating library errors to HTTP statuses.
  template <typename F>
  void Guard(httplib::Response& res, bool needs_models, F&& body) {
    auto m = Models();
    if (needs_models && !m) {
      Reply(res, 503, {{"error", "models are loading"}});
      return;
    }
    try {
      body(m);
    } catch (const DecodeError& e) {
      Reply(res, 422, {{"error", e.what()}, {"kind", "decode"}});
    } catch (const SchemaError& e) {
      Reply(res, 400, {{"error", e.what()}, {"kind", "schema"}});
    } catch (const DataError& e) {
      Reply(res, 400, {{"error", e.what()}, {"kind", "data"}});
    } catch (const ModelError& e) {
      Reply(res, 400, {{"error", e.what()}, {"kind", "model"}});
    } catch (const std::exception& e) {
      Reply(res, 500, {{"error", e.what()}});
    }
  }

  json Predict(const ServiceModels& m, const httplib::Request& req) {
    const Image image = UploadedImage(req);
    std::string image_id = FormField(req, "image_id");
    if (image_id.empty()) image_id = "upload";
    const std::string strategy_text = FormField(req, "strategy");
    const std::string aggregator_text = FormField(req, "aggregator");
    const StrategyKind strategy =
        strategy_text.empty() ? StrategyKind::kTwoStage : scoring::ParseStrategy(strategy_text);
    const AggregationKind aggregator = aggregator_text.empty()
                                           ? AggregationKind::kAverage
                                           : scoring::ParseAggregation(aggregator_text);

    json detections = json::array();
    json roi_scores = json::array();
    scoring::ImageScore score;
    auto add_detections = [&](const std::vector<detection::Detection>& dets) {
      for (const auto& d : dets) detections.push_back(detection::DetectionToJson(d));
    };
    auto need = [](const void* p, const char* what) {
      if (!p) throw ModelError(std::string("no ") + what + " model is loaded");
    };
    switch (strategy) {
      case StrategyKind::kTwoStage: {
        need(m.one_class.get(), "one_class detector");
        need(m.classifier.get(), "ROI classifier");
        const auto dets = m.one_class->Detect(image, image_id);
        add_detections(dets);
        std::vector<scoring::Contribution> lesions;
        for (const auto& d : dets) {
          lesions.push_back({d.box, m.classifier->PredictRoi(image, d.box).probability, d.score});
        }
        score = scoring::Summarize(image_id, strategy, aggregator, lesions, options.scorer);
        break;
      }
      case StrategyKind::kOneStepMalignancy:
      case StrategyKind::kOneStepSubtype: {
        const auto& det = strategy == StrategyKind::kOneStepMalignancy ? m.malignancy : m.subtype;
        need(det.get(), strategy == StrategyKind::kOneStepMalignancy ? "malignancy detector"
                                                                     : "sub_type detector");
        const auto dets = det->Detect(image, image_id);
        add_detections(dets);
        std::vector<scoring::Contribution> lesions;
        for (const auto& d : dets) {
          lesions.push_back(
              {d.box, scoring::OneStepLesionProbability(d, det->granularity()), d.score});
        }
        score = scoring::Summarize(image_id, strategy, aggregator, lesions, options.scorer);
        break;
      }
      case StrategyKind::kDirect:
        need(m.direct.get(), "direct");
        if (m.one_class) add_detections(m.one_class->Detect(image, image_id));
        score = scoring::ScoreDirect(*m.direct, image, image_id);
        break;
    }
    for (const auto& c : score.contributing) {
      roi_scores.push_back({{"box", RoiJson(c.roi)}, {"probability", c.probability}});
    }
    json body = {{"image_id", image_id},
                 {"width", image.width},
                 {"height", image.height},
                 {"detections", detections},
                 {"roi_scores", roi_scores},
                 {"image_score", scoring::ImageScoreToJson(score)}};
    const std::string covariates = FormField(req, "covariates");
    if (!covariates.empty()) {
      need(m.combined.get(), "combined");
      const json values = ParseJsonField(covariates, "covariates");
      if (!values.is_object()) throw SchemaError("field 'covariates' must be a JSON object");
      clinical::CovariateRow row;
      row.image_id = image_id;
      for (const auto& [k, v] : values.items()) {
        row.values[k] = v.is_string() ? v.get<std::string>() : v.dump();
      }
      body["combined_probability"] = m.combined->Predict(image, row);
    }
    return body;
  }

  void Routes() {
    server.Get("/health", [this](const httplib::Request&, httplib::Response& res) {
      const bool ok = Models() != nullptr;
      Reply(res, ok ? 200 : 503, {{"status", ok ? "ok" : "loading"}});
    });
    server.Get("/model-info", [this](const httplib::Request&, httplib::Response& res) {
      Guard(res, true, [&](const auto& m) { Reply(res, 200, m->Info()); });
    });
    server.Post("/predict", [this](const httplib::Request& req, httplib::Response& res) {
      Guard(res, true, [&](const auto& m) { Reply(res, 200, Predict(*m, req)); });
    });
    server.Post("/score-roi", [this](const httplib::Request& req, httplib::Response& res) {
      Guard(res, true, [&](const auto& m) {
        if (!m->classifier) throw ModelError("no ROI classifier model is loaded");
        const Image image = UploadedImage(req);
        const std::string roi_text = FormField(req, "roi");
        if (roi_text.empty()) throw SchemaError("field 'roi' is required");
        const Roi requested = ParseRoi(ParseJsonField(roi_text, "roi"));
        const auto roi = ClampToImage(requested, image.width, image.height);
        if (!roi) throw DataError("roi lies outside the image");
        const auto s = m->classifier->PredictRoi(image, *roi, FormField(req, "image_id"));
        Reply(res, 200, {{"image_id", s.image_id}, {"roi", RoiJson(s.roi)},
                         {"probability", s.probability}});
      });
    });
    server.Post("/annotations", [this](const httplib::Request& req, httplib::Response& res) {
      Guard(res, false, [&](const auto&) {
        const json doc = ParseJsonField(req.body, "body");
        Reply(res, 200, {{"stored", annotations.Append(doc)}});
      });
    });
    server.Get("/annotations", [this](const httplib::Request& req, httplib::Response& res) {
      Guard(res, false, [&](const auto&) {
        if (req.has_param("image_id")) {
          Reply(res, 200, annotations.History(req.get_param_value("image_id")));
        } else {
          Reply(res, 200, annotations.Current());
        }
      });
    });
    server.set_logger([](const httplib::Request& req, const httplib::Response& res) {
      spdlog::debug("{} {} -> {}", req.method, req.path, res.status);
    });
  }
};

Service::Service(ServiceOptions options) : impl_(std::make_unique<Impl>(std::move(options))) {}

Service::~Service() { Stop(); }

void Service::SetModels(ServiceModels models) {
  auto shared = std::make_shared<const ServiceModels>(std::move(models));
  std::lock_guard lock(impl_->mu);
  impl_->models = std::move(shared);
}

bool Service::ready() const { return impl_->Models() != nullptr; }

int Service::Start(const std::string& host, int port) {
  int bound = port;
  if (port == 0) {
    bound = impl_->server.bind_to_any_port(host);
  } else if (!impl_->server.bind_to_port(host, port)) {
    bound = -1;
  }
  if (bound < 0) throw ConfigError("cannot bind " + host + ":" + std::to_string(port));
  impl_->thread = std::thread([this] { impl_->server.listen_after_bind(); });
  impl_->server.wait_until_ready();
  return bound;
}

void Service::Run(const std::string& host, int port) {
  if (!impl_->server.listen(host, port)) {
    throw ConfigError("cannot serve on " + host + ":" + std::to_string(port));
  }
}

void Service::Stop() {
  if (!impl_) return;
  impl_->server.stop();
  if (impl_->thread.joinable()) impl_->thread.join();
}

}  // namespace dermtriage::service
