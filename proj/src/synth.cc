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

#include "dermtriage/synth.h"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <numbers>
#include <numeric>
#include <random>
#include <tuple>

#include "dermtriage/error.h"

namespace dermtriage::synth {
namespace fs = std::filesystem;

namespace {

using Rgb = std::array<double, 3>;

struct LesionStyle {
  Rgb tint;          // multiplicative darkening of the skin color
  Rgb blotch;        // color of the high-contrast inner pattern
  bool patterned;    // malignant lesions carry the blotch pattern
};

LesionStyle StyleFor(LesionLabel label) {
  switch (label) {
    case LesionLabel::kMEL:   return {{0.38, 0.30, 0.30}, {0.10, 0.08, 0.12}, true};
    case LesionLabel::kBCC:   return {{0.78, 0.58, 0.60}, {0.22, 0.12, 0.14}, true};
    case LesionLabel::kAKIEC: return {{0.72, 0.42, 0.38}, {0.20, 0.10, 0.08}, true};
    case LesionLabel::kNV:    return {{0.52, 0.42, 0.36}, {}, false};
    case LesionLabel::kBKL:   return {{0.70, 0.62, 0.52}, {}, false};
    case LesionLabel::kDF:    return {{0.66, 0.52, 0.48}, {}, false};
    case LesionLabel::kVASC:  return {{0.82, 0.32, 0.38}, {}, false};
    case LesionLabel::kOB:    return {{0.80, 0.62, 0.60}, {}, false};
  }
  return {};
}

Rgb SkinColor(SkinTone tone) {
  switch (tone) {
    case SkinTone::kMedium: return {198, 150, 118};
    case SkinTone::kDark:   return {128, 88, 66};
    default:                return {236, 202, 180};
  }
}

double Uniform(std::mt19937_64& rng, double lo, double hi) {
  return std::uniform_real_distribution<double>(lo, hi)(rng);
}

int UniformInt(std::mt19937_64& rng, int lo, int hi) {
  return std::uniform_int_distribution<int>(lo, hi)(rng);
}

// Largest radial extent of the perturbed border, relative to the ellipse.
double MaxRadius(const PlannedLesion& l) {
  double r = 1.0;
  for (double a : l.harmonic_amp) r += std::abs(a);
  return r;
}

// Normalized radius (< 1 inside) of point (x, y) for a planned lesion.
double LesionRadius(const PlannedLesion& l, double x, double y) {
  const double dx = x - l.cx, dy = y - l.cy;
  const double c = std::cos(l.angle), s = std::sin(l.angle);
  const double u = (c * dx + s * dy) / l.ax;
  const double v = (-s * dx + c * dy) / l.ay;
  const double phi = std::atan2(v, u);
  double border = 1.0;
  for (int k = 0; k < 4; ++k) {
    border += l.harmonic_amp[k] * std::cos((k + 2) * phi + l.harmonic_phase[k]);
  }
  return std::sqrt(u * u + v * v) / border;
}

void RenderBackground(Image& img, SkinTone tone, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  const Rgb base = SkinColor(tone);
  struct Wave { double fx, fy, phase, amp; };
  std::array<Wave, 3> waves;
  for (auto& w : waves) {
    w = {Uniform(rng, -0.06, 0.06), Uniform(rng, -0.06, 0.06),
         Uniform(rng, 0, 2 * std::numbers::pi), Uniform(rng, 3, 8)};
  }
  std::normal_distribution<double> noise(0.0, 4.0);
  for (int y = 0; y < img.height; ++y) {
    for (int x = 0; x < img.width; ++x) {
      double shade = 0;
      for (const auto& w : waves) shade += w.amp * std::sin(w.fx * x + w.fy * y + w.phase);
      const double n = noise(rng);
      for (int c = 0; c < 3; ++c) {
        img.at(x, y, c) = std::uint8_t(std::clamp(base[c] + shade + n, 0.0, 255.0));
      }
    }
  }
  // Faint freckles a few pixels wide.
  const int freckles = UniformInt(rng, 0, 4);
  for (int f = 0; f < freckles; ++f) {
    const double fx = Uniform(rng, 0, img.width), fy = Uniform(rng, 0, img.height);
    const double r = Uniform(rng, 0.8, 1.8);
    for (int y = std::max(0, int(fy - 3)); y < std::min(img.height, int(fy + 4)); ++y) {
      for (int x = std::max(0, int(fx - 3)); x < std::min(img.width, int(fx + 4)); ++x) {
        if (std::hypot(x + 0.5 - fx, y + 0.5 - fy) > r) continue;
        for (int c = 0; c < 3; ++c) img.at(x, y, c) = std::uint8_t(img.at(x, y, c) * 0.85);
      }
    }
  }
}

void RenderLesion(Image& img, const PlannedLesion& l, double contrast, Box* bbox) {
  const LesionStyle style = StyleFor(l.label);
  std::mt19937_64 rng(l.texture_seed);
  struct Spot { double x, y, r; };
  std::vector<Spot> spots;
  if (style.patterned) {
    const int n = UniformInt(rng, 4, 7);
    for (int i = 0; i < n; ++i) {
      const double ang = Uniform(rng, 0, 2 * std::numbers::pi);
      const double rad = Uniform(rng, 0.0, 0.6);
      spots.push_back({l.cx + rad * l.ax * std::cos(ang), l.cy + rad * l.ay * std::sin(ang),
                       Uniform(rng, 0.18, 0.32) * std::min(l.ax, l.ay)});
    }
  }
  std::normal_distribution<double> grain(0.0, style.patterned ? 0.05 : 0.015);
  const double reach = MaxRadius(l) * std::max(l.ax, l.ay) + 1;
  const int x0 = std::max(0, int(std::floor(l.cx - reach)));
  const int x1 = std::min(img.width, int(std::ceil(l.cx + reach)) + 1);
  const int y0 = std::max(0, int(std::floor(l.cy - reach)));
  const int y1 = std::min(img.height, int(std::ceil(l.cy + reach)) + 1);
  double bx1 = 1e9, by1 = 1e9, bx2 = -1e9, by2 = -1e9;
  for (int y = y0; y < y1; ++y) {
    for (int x = x0; x < x1; ++x) {
      const double rho = LesionRadius(l, x + 0.5, y + 0.5);
      if (rho >= 1.0) continue;
      bx1 = std::min(bx1, double(x));
      by1 = std::min(by1, double(y));
      bx2 = std::max(bx2, double(x + 1));
      by2 = std::max(by2, double(y + 1));
      // Slightly darker core, lighter rim.
      const double core = 1.0 - 0.12 * (1.0 - rho);
      double blotch = 0;
      for (const auto& s : spots) {
        const double d = std::hypot(x + 0.5 - s.x, y + 0.5 - s.y) / s.r;
        if (d < 1.0) blotch = std::max(blotch, contrast * (d < 0.7 ? 1.0 : (1.0 - d) / 0.3));
      }
      const double g = grain(rng);
      for (int c = 0; c < 3; ++c) {
        const double skin = img.at(x, y, c);
        const double lesion = skin * (style.tint[c] * core + g);
        const double dark = skin * style.blotch[c] + 10;
        const double v = (1 - blotch) * lesion + blotch * dark;
        img.at(x, y, c) = std::uint8_t(std::clamp(v, 0.0, 255.0));
      }
    }
  }
  *bbox = {bx1, by1, bx2, by2};
}

PlannedLesion SampleLesion(std::mt19937_64& rng, const SynthConfig& cfg,
                           LesionLabel label, double diameter) {
  PlannedLesion l{};
  l.label = label;
  const double aspect = Uniform(rng, 0.7, 1.0);
  l.ax = diameter / 2;
  l.ay = diameter / 2 * aspect;
  l.angle = Uniform(rng, 0, std::numbers::pi);
  const double irr = IsMalignant(label) ? cfg.irregularity : cfg.irregularity / 6;
  for (int k = 0; k < 4; ++k) {
    l.harmonic_amp[k] = irr * Uniform(rng, 0.3, 1.0) / (k + 1);
    l.harmonic_phase[k] = Uniform(rng, 0, 2 * std::numbers::pi);
  }
  l.texture_seed = rng();
  return l;
}

LesionLabel SampleLabel(std::mt19937_64& rng, const SynthConfig& cfg) {
  std::discrete_distribution<int> dist(cfg.priors.begin(), cfg.priors.end());
  return kAllLesionLabels[dist(rng)];
}

std::string FormatId(const char* prefix, int n) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%s%05d", prefix, n);
  return buf;
}

}  // namespace

std::array<double, kNumLesionLabels> DiscoveryPriors() {
  const std::array<double, kNumLesionLabels> counts = {596, 1343, 1627, 2473,
                                                        974, 97,   106,  1027};
  const double total = std::accumulate(counts.begin(), counts.end(), 0.0);
  std::array<double, kNumLesionLabels> p;
  for (int i = 0; i < kNumLesionLabels; ++i) p[i] = counts[i] / total;
  return p;
}

void SynthConfig::Validate() const {
  if (num_images <= 0) throw ConfigError("num_images must be positive");
  if (min_side < 16 || max_side < min_side) throw ConfigError("invalid image side range");
  if (min_lesions < 1 || max_lesions < min_lesions) throw ConfigError("invalid lesion count range");
  if (max_images_per_patient < 1) throw ConfigError("max_images_per_patient must be >= 1");
  if (dermoscopy_fraction < 0 || dermoscopy_fraction > 1) {
    throw ConfigError("dermoscopy_fraction must lie in [0, 1]");
  }
  double sum = 0;
  for (double p : priors) {
    if (p < 0) throw ConfigError("class priors must be non-negative");
    sum += p;
  }
  if (std::abs(sum - 1.0) > 1e-6) throw ConfigError("class priors must sum to 1");
  // Dermoscopy lesions are centered with up to 10% jitter.
  for (auto [lo, hi, jitter] : {std::tuple{wide_field_min_frac, wide_field_max_frac, 0.0},
                                std::tuple{dermoscopy_min_frac, dermoscopy_max_frac, 0.1}}) {
    if (!(lo > 0) || hi < lo) throw ConfigError("invalid lesion size range");
    // Widest possible border excursion must still fit inside the frame.
    if (hi * (1.0 + irregularity * (1 + 0.5 + 1.0 / 3 + 0.25)) + jitter >= 0.98) {
      throw ConfigError("lesion larger than image for the configured size range");
    }
  }
  if (irregularity < 0 || contrast < 0 || contrast > 1) {
    throw ConfigError("irregularity must be >= 0 and contrast in [0, 1]");
  }
}

std::vector<PlannedImage> PlanDataset(const SynthConfig& cfg) {
  cfg.Validate();
  std::mt19937_64 rng(cfg.seed);
  std::vector<PlannedImage> plans;
  int patient = 0;
  int left_for_patient = 0;
  SkinTone tone = SkinTone::kLight;
  std::discrete_distribution<int> tone_dist({0.84, 0.145, 0.015});
  for (int n = 0; n < cfg.num_images; ++n) {
    if (left_for_patient == 0) {
      ++patient;
      left_for_patient = UniformInt(rng, 1, cfg.max_images_per_patient);
      tone = static_cast<SkinTone>(tone_dist(rng));
    }
    --left_for_patient;
    PlannedImage img;
    img.image_id = FormatId("img_", n);
    img.patient_id = FormatId("P", patient);
    img.tone = tone;
    img.capture = Uniform(rng, 0, 1) < cfg.dermoscopy_fraction ? Capture::kDermoscopy
                                                               : Capture::kWideField;
    img.width = UniformInt(rng, cfg.min_side, cfg.max_side);
    img.height = UniformInt(rng, cfg.min_side, cfg.max_side);
    img.texture_seed = rng();
    const double short_side = std::min(img.width, img.height);
    if (img.capture == Capture::kDermoscopy) {
      const double d = short_side * Uniform(rng, cfg.dermoscopy_min_frac, cfg.dermoscopy_max_frac);
      PlannedLesion l = SampleLesion(rng, cfg, SampleLabel(rng, cfg), d);
      l.cx = img.width / 2.0 + Uniform(rng, -0.05, 0.05) * img.width;
      l.cy = img.height / 2.0 + Uniform(rng, -0.05, 0.05) * img.height;
      img.lesions.push_back(l);
    } else {
      const int count = UniformInt(rng, cfg.min_lesions, cfg.max_lesions);
      for (int k = 0; k < count; ++k) {
        const LesionLabel label = SampleLabel(rng, cfg);
        const double d = short_side * Uniform(rng, cfg.wide_field_min_frac, cfg.wide_field_max_frac);
        PlannedLesion l = SampleLesion(rng, cfg, label, d);
        const double reach = MaxRadius(l) * l.ax + 2;
        bool placed = false;
        for (int attempt = 0; attempt < 50 && !placed; ++attempt) {
          l.cx = Uniform(rng, reach, img.width - reach);
          l.cy = Uniform(rng, reach, img.height - reach);
          placed = std::all_of(img.lesions.begin(), img.lesions.end(), [&](const PlannedLesion& o) {
            return std::hypot(o.cx - l.cx, o.cy - l.cy) > reach + MaxRadius(o) * o.ax + 2;
          });
        }
        if (placed) img.lesions.push_back(l);
      }
      if (img.lesions.empty()) {
        // Crowded frame: fall back to one centered lesion.
        PlannedLesion l = SampleLesion(rng, cfg, SampleLabel(rng, cfg),
                                       short_side * cfg.wide_field_min_frac);
        l.cx = img.width / 2.0;
        l.cy = img.height / 2.0;
        img.lesions.push_back(l);
      }
    }
    img.image_label = std::any_of(img.lesions.begin(), img.lesions.end(),
                                  [](const PlannedLesion& l) { return IsMalignant(l.label); });
    plans.push_back(std::move(img));
  }
  return plans;
}

Image RenderBlank(int width, int height, SkinTone tone, std::uint64_t seed) {
  Image img(width, height);
  RenderBackground(img, tone, seed);
  return img;
}

Image RenderImage(const PlannedImage& plan, std::vector<Roi>* rois) {
  Image img = RenderBlank(plan.width, plan.height, plan.tone, plan.texture_seed);
  for (const auto& l : plan.lesions) {
    Box bbox;
    RenderLesion(img, l, 1.0, &bbox);
    if (rois) rois->push_back(Roi::FromCorners(bbox, l.label));
  }
  return img;
}

clinical::CovariateSchema SynthSchema() {
  clinical::CovariateSchema schema;
  schema.continuous = {"age", "prior_visits"};
  schema.categorical = {
      {"sex", {"F", "M"}},
      {"race", {"white", "black", "asian"}},
      {"location", {"head_neck", "trunk", "upper_extremity", "lower_extremity"}},
      {"chronic_ulcer", {"no", "yes"}},
      {"immunosuppressant_risk", {"none", "low", "high"}},
  };
  return schema;
}

GeneratedDataset GenerateDataset(const SynthConfig& cfg, const std::string& out_dir) {
  const std::vector<PlannedImage> plans = PlanDataset(cfg);
  fs::create_directories(fs::path(out_dir) / "images");
  GeneratedDataset out;
  out.manifest.base_dir = out_dir;
  std::mt19937_64 cov_rng(cfg.seed ^ 0x9e3779b97f4a7c15ULL);
  std::normal_distribution<double> normal(0.0, 1.0);
  for (const auto& plan : plans) {
    ImageRecord rec;
    rec.image_id = plan.image_id;
    rec.patient_id = plan.patient_id;
    rec.path = "images/" + plan.image_id + ".png";
    rec.capture = plan.capture;
    rec.skin_tone = plan.tone;
    rec.width = plan.width;
    rec.height = plan.height;
    Image img = RenderImage(plan, &rec.rois);
    SaveImagePng(img, (fs::path(out_dir) / rec.path).string());

    const double z = cfg.covariate_strength * (plan.image_label ? 1.0 : -1.0);
    clinical::CovariateRow row;
    row.image_id = plan.image_id;
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.1f", std::clamp(58 + 9 * z + 12 * normal(cov_rng), 18.0, 99.0));
    row.values["age"] = buf;
    row.values["prior_visits"] =
        std::to_string(std::max(0, int(std::lround(2.5 + 1.2 * z + 1.5 * normal(cov_rng)))));
    row.values["sex"] = Uniform(cov_rng, 0, 1) < 0.5 ? "F" : "M";
    const double r = Uniform(cov_rng, 0, 1);
    row.values["race"] = r < 0.8 ? "white" : r < 0.92 ? "black" : r < 0.98 ? "asian" : "";
    static const char* kLocations[] = {"head_neck", "trunk", "upper_extremity", "lower_extremity"};
    row.values["location"] = kLocations[UniformInt(cov_rng, 0, 3)];
    row.values["chronic_ulcer"] = Uniform(cov_rng, 0, 1) < 0.1 ? "yes" : "no";
    const double risk = Uniform(cov_rng, 0, 1) + 0.15 * z;
    row.values["immunosuppressant_risk"] = risk < 0.6 ? "none" : risk < 0.85 ? "low" : "high";
    out.covariates.push_back(std::move(row));
    out.manifest.records.push_back(std::move(rec));
  }
  WriteManifest(out.manifest, (fs::path(out_dir) / "manifest.json").string());
  const auto schema = SynthSchema();
  clinical::WriteCovariateCsv(out.covariates, schema, (fs::path(out_dir) / "covariates.csv").string());
  std::ofstream((fs::path(out_dir) / "covariate_schema.json").string())
      << schema.ToJson().dump(1) << "\n";
  return out;
}

}  // namespace dermtriage::synth
