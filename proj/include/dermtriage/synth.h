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

#ifndef DERMTRIAGE_SYNTH_H_
#define DERMTRIAGE_SYNTH_H_

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "dermtriage/covariates.h"
#include "dermtriage/image.h"
#include "dermtriage/lesion_label.h"
#include "dermtriage/manifest.h"

namespace dermtriage::synth {

// Lesion-type proportions of the discovery cohort (596, 1343, 1627, 2473,
// 974, 97, 106, 1027 lesions out of 8243).
std::array<double, kNumLesionLabels> DiscoveryPriors();

struct SynthConfig {
  int num_images = 1000;
  int min_side = 96;
  int max_side = 160;
  int min_lesions = 1;
  int max_lesions = 3;
  // Lesion diameter as a fraction of the shorter image side.
  double wide_field_min_frac = 0.12;
  double wide_field_max_frac = 0.30;
  double dermoscopy_min_frac = 0.35;
  double dermoscopy_max_frac = 0.50;
  double dermoscopy_fraction = 0.15;
  int max_images_per_patient = 2;
  std::array<double, kNumLesionLabels> priors = DiscoveryPriors();
  // Border perturbation amplitude of malignant lesions (benign use 1/6).
  double irregularity = 0.25;
  // Strength of the dark blotch pattern inside malignant lesions, in [0, 1].
  double contrast = 1.0;
  // Shift of label-correlated covariates, in standard deviations.
  double covariate_strength = 1.0;
  std::uint64_t seed = 7;

  void Validate() const;
};

struct PlannedLesion {
  LesionLabel label;
  double cx, cy;        // center
  double ax, ay;        // semi-axes
  double angle;         // radians
  std::array<double, 4> harmonic_amp;
  std::array<double, 4> harmonic_phase;
  std::uint64_t texture_seed;
};

struct PlannedImage {
  std::string image_id;
  std::string patient_id;
  Capture capture;
  SkinTone tone;
  int width, height;
  std::uint64_t texture_seed;
  std::vector<PlannedLesion> lesions;
  int image_label;
};

// Samples every random quantity of the dataset without rendering pixels.
std::vector<PlannedImage> PlanDataset(const SynthConfig& config);

// Renders an image and the exact bounding boxes of its lesions.
Image RenderImage(const PlannedImage& plan, std::vector<Roi>* rois);

// Skin background without lesions, for negative smoke tests.
Image RenderBlank(int width, int height, SkinTone tone, std::uint64_t seed);

// Covariate schema describing the generated CSV columns.
clinical::CovariateSchema SynthSchema();

struct GeneratedDataset {
  DatasetManifest manifest;
  std::vector<clinical::CovariateRow> covariates;
};

// Writes images/<id>.png, manifest.json, covariates.csv and
// covariate_schema.json under `out_dir` and returns the in-memory manifest.
GeneratedDataset GenerateDataset(const SynthConfig& config, const std::string& out_dir);

}  // namespace dermtriage::synth

#endif  // DERMTRIAGE_SYNTH_H_
