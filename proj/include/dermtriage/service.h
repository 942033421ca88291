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

#ifndef DERMTRIAGE_SERVICE_H_
#define DERMTRIAGE_SERVICE_H_

#include <memory>
#include <mutex>
#include <string>
#include <vector>

#include <json.hpp>

#include "dermtriage/classifier.h"
#include "dermtriage/combined.h"
#include "dermtriage/detector.h"
#include "dermtriage/image_scorer.h"

namespace dermtriage::service {

// Any member may be null; endpoints needing a missing model answer 400.
struct ServiceModels {
  std::shared_ptr<const detection::DetectorModel> one_class;
  std::shared_ptr<const classify::ClassifierModel> classifier;
  std::shared_ptr<const detection::DetectorModel> malignancy;
  std::shared_ptr<const detection::DetectorModel> subtype;
  std::shared_ptr<const classify::ClassifierModel> direct;
  std::shared_ptr<const clinical::CombinedModel> combined;

  nlohmann::json Info() const;
};

// Append-only annotation log. Every accepted record becomes a new revision in
// revisions.jsonl; manifest.json holds the latest revision of each image.
class AnnotationStore {
 public:
  explicit AnnotationStore(std::string dir);

  // Validates `doc` (one manifest image record, or a manifest document) and
  // appends one revision per record. Returns the new revision numbers.
  nlohmann::json Append(const nlohmann::json& doc);
  nlohmann::json Current() const;
  nlohmann::json History(const std::string& image_id) const;
  const std::string& dir() const { return dir_; }

 private:
  void Rewrite() const;

  std::string dir_;
  mutable std::mutex mu_;
  std::vector<nlohmann::json> revisions_;
};

struct ServiceOptions {
  std::string annotation_dir = "annotations";
  scoring::ScorerOptions scorer;
};

// HTTP front end. Until models are installed every model endpoint answers
// 503.
class Service {
 public:
  explicit Service(ServiceOptions options);
  ~Service();

  void SetModels(ServiceModels models);
  bool ready() const;

  // Binds (port 0 picks a free port) and serves on a background thread.
  int Start(const std::string& host, int port);
  // Serves on the calling thread until Stop.
  void Run(const std::string& host, int port);
  void Stop();

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

}  // namespace dermtriage::service

#endif  // DERMTRIAGE_SERVICE_H_
