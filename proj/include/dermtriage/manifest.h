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

#ifndef DERMTRIAGE_MANIFEST_H_
#define DERMTRIAGE_MANIFEST_H_

#include <array>
#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "dermtriage/lesion_label.h"
#include "dermtriage/roi.h"

namespace dermtriage {

enum class Capture { kDermoscopy, kWideField };
enum class SkinTone { kLight, kMedium, kDark, kUnknown };
enum class Split { kTrain, kVal, kTest };

std::string CaptureName(Capture c);
std::string SkinToneName(SkinTone t);
std::string SplitName(Split s);
Capture ParseCapture(const std::string& s);
SkinTone ParseSkinTone(const std::string& s);
Split ParseSplit(const std::string& s);

struct ImageRecord {
  std::string image_id;
  std::string patient_id;
  std::string path;
  Capture capture = Capture::kWideField;
  SkinTone skin_tone = SkinTone::kUnknown;
  // Pixel dimensions; 0 when unknown.
  int width = 0;
  int height = 0;
  std::vector<Roi> rois;

  // 1 iff at least one ROI label is malignant.
  int ImageLabel() const;
};

struct DatasetManifest {
  std::vector<ImageRecord> records;
  std::map<std::string, Split> splits;

  const ImageRecord* Find(const std::string& image_id) const;
  std::vector<const ImageRecord*> InSplit(Split split) const;
  // Resolves a record path against the manifest's directory.
  std::string ResolvePath(const ImageRecord& record) const;

  std::string base_dir;
};

// Parses the manifest document. Image sizes come from optional "width" and
// "height" fields or, failing that, from the image file itself. ROIs
// partially outside the image are clamped; fully outside ROIs and duplicate
// image ids raise DataError; schema violations raise SchemaError naming the
// offending record and field.
DatasetManifest ParseManifest(const nlohmann::json& doc,
                              const std::string& base_dir = "");
DatasetManifest LoadManifest(const std::string& path);
DatasetManifest LoadManifest(const std::string& path,
                             const std::string& split_path);

nlohmann::json ManifestToJson(const DatasetManifest& manifest);
void WriteManifest(const DatasetManifest& manifest, const std::string& path);

nlohmann::json SplitsToJson(const DatasetManifest& manifest);
std::map<std::string, Split> ParseSplits(const nlohmann::json& doc);
void WriteSplits(const DatasetManifest& manifest, const std::string& path);

// Builds a manifest from an ISIC-style CSV (`image,label`). Every image gets
// one ROI centred on the frame whose size is the image size times
// `margin_factor`. Images are looked up as <images_dir>/<image>.jpg or .png.
DatasetManifest IngestIsic(const std::string& images_dir,
                           const std::string& labels_file,
                           double margin_factor = 1.0);

struct SplitFractions {
  double train = 0.85;
  double val = 0.15;
};

// Patient-disjoint split. Patients are shuffled with `seed` and laid out in
// order; each joins train, val or test according to where the midpoint of
// its images falls among the cumulative quotas. The remainder is test.
DatasetManifest PatientSplit(const DatasetManifest& manifest,
                             SplitFractions fractions, std::uint64_t seed);

// Lesion counts per type.
std::array<int, kNumLesionLabels> LesionCounts(const DatasetManifest& manifest);

// Lesion-type table (count and rounded percentage per type).
std::string FormatLesionTable(const DatasetManifest& manifest);

}  // namespace dermtriage

#endif  // DERMTRIAGE_MANIFEST_H_
