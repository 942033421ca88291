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

#include "dermtriage/manifest.h"

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <numeric>
#include <random>
#include <set>
#include <sstream>

#include "dermtriage/error.h"
#include "dermtriage/image.h"

namespace dermtriage {
namespace fs = std::filesystem;
using nlohmann::json;

namespace {

template <typename T, std::size_t N>
T ParseEnum(const std::string& s, const std::array<const char*, N>& names,
            const char* what) {
  for (std::size_t i = 0; i < N; ++i) {
    if (s == names[i]) return static_cast<T>(i);
  }
  throw SchemaError(std::string("unknown ") + what + " '" + s + "'");
}

constexpr std::array<const char*, 2> kCaptureNames = {"dermoscopy", "wide_field"};
constexpr std::array<const char*, 4> kToneNames = {"light", "medium", "dark",
                                                   "unknown"};
constexpr std::array<const char*, 3> kSplitNames = {"train", "val", "test"};

std::string Where(std::size_t index, const std::string& id,
                  const std::string& field) {
  std::ostringstream os;
  os << "images[" << index << "]";
  if (!id.empty()) os << " (" << id << ")";
  os << " field '" << field << "'";
  return os.str();
}

double RequireNumber(const json& obj, const char* key, const std::string& where) {
  auto it = obj.find(key);
  if (it == obj.end() || !it->is_number()) {
    throw SchemaError(where + "." + key + ": expected a number");
  }
  return it->get<double>();
}

std::string RequireString(const json& obj, const char* key,
                          const std::string& where) {
  auto it = obj.find(key);
  if (it == obj.end() || !it->is_string()) {
    throw SchemaError(where + ": expected string '" + key + "'");
  }
  return it->get<std::string>();
}

}  // namespace

std::string CaptureName(Capture c) { return kCaptureNames[int(c)]; }
std::string SkinToneName(SkinTone t) { return kToneNames[int(t)]; }
std::string SplitName(Split s) { return kSplitNames[int(s)]; }
Capture ParseCapture(const std::string& s) {
  return ParseEnum<Capture>(s, kCaptureNames, "capture");
}
SkinTone ParseSkinTone(const std::string& s) {
  return ParseEnum<SkinTone>(s, kToneNames, "skin_tone");
}
Split ParseSplit(const std::string& s) {
  return ParseEnum<Split>(s, kSplitNames, "split");
}

int ImageRecord::ImageLabel() const {
  return std::any_of(rois.begin(), rois.end(),
                     [](const Roi& r) { return r.label && IsMalignant(*r.label); })
             ? 1
             : 0;
}

const ImageRecord* DatasetManifest::Find(const std::string& image_id) const {
  for (const auto& r : records) {
    if (r.image_id == image_id) return &r;
  }
  return nullptr;
}

std::vector<const ImageRecord*> DatasetManifest::InSplit(Split split) const {
  std::vector<const ImageRecord*> out;
  for (const auto& r : records) {
    auto it = splits.find(r.image_id);
    if (it != splits.end() && it->second == split) out.push_back(&r);
  }
  return out;
}

std::string DatasetManifest::ResolvePath(const ImageRecord& record) const {
  fs::path p(record.path);
  if (p.is_absolute() || base_dir.empty()) return p.string();
  return (fs::path(base_dir) / p).string();
}

DatasetManifest ParseManifest(const json& doc, const std::string& base_dir) {
  if (!doc.is_object() || !doc.contains("images") || !doc["images"].is_array()) {
    throw SchemaError("manifest: expected an object with an 'images' array");
  }
  DatasetManifest manifest;
  manifest.base_dir = base_dir;
  std::set<std::string> seen;
  const json& images = doc["images"];
  for (std::size_t i = 0; i < images.size(); ++i) {
    const json& item = images[i];
    const std::string where = Where(i, "", "");
    if (!item.is_object()) throw SchemaError(where + ": expected an object");
    ImageRecord rec;
    rec.image_id = RequireString(item, "image_id", "images[" + std::to_string(i) + "]");
    const std::string at = "images[" + std::to_string(i) + "] (" + rec.image_id + ")";
    rec.patient_id = RequireString(item, "patient_id", at);
    rec.path = RequireString(item, "path", at);
    try {
      rec.capture = ParseCapture(RequireString(item, "capture", at));
      rec.skin_tone = item.contains("skin_tone")
                          ? ParseSkinTone(RequireString(item, "skin_tone", at))
                          : SkinTone::kUnknown;
    } catch (const SchemaError& e) {
      throw SchemaError(at + ": " + e.what());
    }
    if (!seen.insert(rec.image_id).second) {
      throw DataError("duplicate image_id '" + rec.image_id + "'");
    }
    if (item.contains("width") || item.contains("height")) {
      rec.width = int(RequireNumber(item, "width", at));
      rec.height = int(RequireNumber(item, "height", at));
      if (rec.width <= 0 || rec.height <= 0) {
        throw SchemaError(at + ": width/height must be positive");
      }
    }
    if (!item.contains("rois") || !item["rois"].is_array()) {
      throw SchemaError(Where(i, rec.image_id, "rois") + ": expected an array");
    }
    if (rec.width == 0 && !item["rois"].empty()) {
      DatasetManifest probe;
      probe.base_dir = base_dir;
      try {
        Image img = LoadImage(probe.ResolvePath(rec));
        rec.width = img.width;
        rec.height = img.height;
      } catch (const DecodeError&) {
        throw DataError(at + ": image size unknown (no width/height and '" +
                        rec.path + "' is unreadable)");
      }
    }
    const json& rois = item["rois"];
    for (std::size_t j = 0; j < rois.size(); ++j) {
      const std::string rw = at + ".rois[" + std::to_string(j) + "]";
      const json& r = rois[j];
      if (!r.is_object()) throw SchemaError(rw + ": expected an object");
      Roi roi{RequireNumber(r, "x_center", rw), RequireNumber(r, "y_center", rw),
              RequireNumber(r, "width", rw), RequireNumber(r, "height", rw),
              std::nullopt};
      if (!(roi.width > 0) || !(roi.height > 0)) {
        throw SchemaError(rw + ": width and height must be > 0");
      }
      if (r.contains("label") && !r["label"].is_null()) {
        try {
          roi.label = ParseLesionLabel(RequireString(r, "label", rw));
        } catch (const SchemaError& e) {
          throw SchemaError(rw + ".label: " + e.what());
        }
      }
      auto clamped = ClampToImage(roi, rec.width, rec.height);
      if (!clamped) {
        throw DataError(rw + ": ROI lies fully outside the " +
                        std::to_string(rec.width) + "x" +
                        std::to_string(rec.height) + " image");
      }
      rec.rois.push_back(*clamped);
    }
    if (item.contains("image_label") && item["image_label"].is_number_integer() &&
        item["image_label"].get<int>() != rec.ImageLabel()) {
      throw SchemaError(at + ": image_label disagrees with ROI labels");
    }
    manifest.records.push_back(std::move(rec));
  }
  if (doc.contains("splits")) manifest.splits = ParseSplits(doc["splits"]);
  return manifest;
}

DatasetManifest LoadManifest(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw SchemaError("cannot open manifest '" + path + "'");
  json doc;
  try {
    doc = json::parse(in);
  } catch (const json::parse_error& e) {
    throw SchemaError("manifest '" + path + "': " + e.what());
  }
  return ParseManifest(doc, fs::path(path).parent_path().string());
}

DatasetManifest LoadManifest(const std::string& path,
                             const std::string& split_path) {
  DatasetManifest m = LoadManifest(path);
  std::ifstream in(split_path);
  if (!in) throw SchemaError("cannot open split file '" + split_path + "'");
  try {
    m.splits = ParseSplits(json::parse(in));
  } catch (const json::parse_error& e) {
    throw SchemaError("split file '" + split_path + "': " + e.what());
  }
  for (const auto& [id, split] : m.splits) {
    if (!m.Find(id)) throw DataError("split file names unknown image '" + id + "'");
  }
  return m;
}

json ManifestToJson(const DatasetManifest& manifest) {
  json images = json::array();
  for (const auto& r : manifest.records) {
    json rois = json::array();
    for (const auto& roi : r.rois) {
      json jr = {{"x_center", roi.x_center},
                 {"y_center", roi.y_center},
                 {"width", roi.width},
                 {"height", roi.height}};
      if (roi.label) jr["label"] = std::string(LabelName(*roi.label));
      rois.push_back(std::move(jr));
    }
    json item = {{"image_id", r.image_id},
                 {"patient_id", r.patient_id},
                 {"path", r.path},
                 {"capture", CaptureName(r.capture)},
                 {"skin_tone", SkinToneName(r.skin_tone)},
                 {"rois", std::move(rois)},
                 {"image_label", r.ImageLabel()}};
    if (r.width > 0) {
      item["width"] = r.width;
      item["height"] = r.height;
    }
    images.push_back(std::move(item));
  }
  return {{"images", std::move(images)}};
}

void WriteManifest(const DatasetManifest& manifest, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw Error("cannot write manifest '" + path + "'");
  out << ManifestToJson(manifest).dump(1) << "\n";
}

json SplitsToJson(const DatasetManifest& manifest) {
  json doc = json::object();
  for (const auto& [id, split] : manifest.splits) doc[id] = SplitName(split);
  return doc;
}

std::map<std::string, Split> ParseSplits(const json& doc) {
  if (!doc.is_object()) throw SchemaError("split file: expected an object");
  std::map<std::string, Split> out;
  for (const auto& [id, v] : doc.items()) {
    if (!v.is_string()) throw SchemaError("split for '" + id + "' must be a string");
    out[id] = ParseSplit(v.get<std::string>());
  }
  return out;
}

void WriteSplits(const DatasetManifest& manifest, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw Error("cannot write split file '" + path + "'");
  out << SplitsToJson(manifest).dump(1) << "\n";
}

DatasetManifest IngestIsic(const std::string& images_dir,
                           const std::string& labels_file, double margin_factor) {
  if (!(margin_factor > 0)) throw ConfigError("margin factor must be positive");
  std::ifstream in(labels_file);
  if (!in) throw SchemaError("cannot open labels file '" + labels_file + "'");
  DatasetManifest manifest;
  std::set<std::string> seen;
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    const auto comma = line.find(',');
    if (comma == std::string::npos) {
      throw SchemaError(labels_file + ":" + std::to_string(line_no) +
                        ": expected 'image,label'");
    }
    std::string image = line.substr(0, comma);
    std::string label = line.substr(comma + 1);
    if (line_no == 1 && image == "image") continue;
    LesionLabel code;
    try {
      code = ParseLesionLabel(label);
    } catch (const SchemaError& e) {
      throw SchemaError(labels_file + ":" + std::to_string(line_no) + ": " + e.what());
    }
    if (!seen.insert(image).second) {
      throw DataError("duplicate image_id '" + image + "'");
    }
    std::string path;
    for (const char* ext : {".jpg", ".png", ".jpeg", ""}) {
      fs::path p = fs::path(images_dir) / (image + ext);
      if (fs::exists(p)) {
        path = p.string();
        break;
      }
    }
    if (path.empty()) throw DataError("image '" + image + "' not found in " + images_dir);
    Image img = LoadImage(path);
    ImageRecord rec;
    rec.image_id = image;
    // ISIC ships one lesion per image; each image is its own patient unless a
    // lesion-to-patient map is supplied separately.
    rec.patient_id = image;
    rec.path = path;
    rec.capture = Capture::kDermoscopy;
    rec.width = img.width;
    rec.height = img.height;
    Roi roi{img.width / 2.0, img.height / 2.0, img.width * margin_factor,
            img.height * margin_factor, code};
    rec.rois.push_back(*ClampToImage(roi, img.width, img.height));
    manifest.records.push_back(std::move(rec));
  }
  return manifest;
}

DatasetManifest PatientSplit(const DatasetManifest& manifest,
                             SplitFractions fractions, std::uint64_t seed) {
  if (!(fractions.train > 0) || fractions.val < 0 ||
      fractions.train + fractions.val > 1.0 + 1e-12) {
    throw ConfigError("split fractions must be non-negative and sum to at most 1");
  }
  std::map<std::string, int> images_per_patient;
  for (const auto& r : manifest.records) ++images_per_patient[r.patient_id];
  if (images_per_patient.size() < 2) {
    throw DataError("patient split needs at least 2 patients");
  }
  std::vector<std::string> patients;
  for (const auto& [p, n] : images_per_patient) patients.push_back(p);
  std::mt19937_64 rng(seed);
  std::shuffle(patients.begin(), patients.end(), rng);

  // Patients are laid end to end in shuffled order; each goes to the split
  // whose quota range holds the midpoint of its images.
  const double total = double(manifest.records.size());
  const double train_quota = fractions.train * total;
  const double val_quota = (fractions.train + fractions.val) * total;
  std::map<std::string, Split> by_patient;
  int assigned = 0;
  for (const auto& p : patients) {
    const int n = images_per_patient[p];
    const double mid = assigned + n / 2.0;
    by_patient[p] = mid <= train_quota ? Split::kTrain
                    : mid <= val_quota ? Split::kVal
                                       : Split::kTest;
    assigned += n;
  }
  DatasetManifest out = manifest;
  out.splits.clear();
  for (const auto& r : out.records) out.splits[r.image_id] = by_patient[r.patient_id];
  return out;
}

std::array<int, kNumLesionLabels> LesionCounts(const DatasetManifest& manifest) {
  std::array<int, kNumLesionLabels> counts{};
  for (const auto& r : manifest.records) {
    for (const auto& roi : r.rois) {
      if (roi.label) ++counts[LabelIndex(*roi.label)];
    }
  }
  return counts;
}

std::string FormatLesionTable(const DatasetManifest& manifest) {
  const auto counts = LesionCounts(manifest);
  const int total = std::accumulate(counts.begin(), counts.end(), 0);
  std::ostringstream os;
  os << std::left << std::setw(12) << "Lesion Type" << "Count\n";
  for (LesionLabel l : kAllLesionLabels) {
    const int n = counts[LabelIndex(l)];
    const int pct = total > 0 ? int(std::lround(100.0 * n / total)) : 0;
    os << std::left << std::setw(12) << LabelName(l) << n << " (" << pct << "%)\n";
  }
  return os.str();
}

}  // namespace dermtriage
