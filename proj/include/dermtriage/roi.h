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

#ifndef DERMTRIAGE_ROI_H_
#define DERMTRIAGE_ROI_H_

#include <optional>

#include "dermtriage/lesion_label.h"

namespace dermtriage {

// Axis-aligned box in corner form, half-open in continuous pixel space.
struct Box {
  double x1 = 0, y1 = 0, x2 = 0, y2 = 0;

  double Width() const { return x2 - x1; }
  double Height() const { return y2 - y1; }
  double Area() const {
    return Width() > 0 && Height() > 0 ? Width() * Height() : 0.0;
  }
};

// Region of interest in center form (x_center, y_center, width, height).
// Predictions carry no label.
struct Roi {
  double x_center = 0;
  double y_center = 0;
  double width = 0;
  double height = 0;
  std::optional<LesionLabel> label;

  Box Corners() const {
    return {x_center - width / 2, y_center - height / 2, x_center + width / 2,
            y_center + height / 2};
  }
  static Roi FromCorners(const Box& b,
                         std::optional<LesionLabel> label = std::nullopt) {
    return {(b.x1 + b.x2) / 2, (b.y1 + b.y2) / 2, b.x2 - b.x1, b.y2 - b.y1,
            label};
  }
  bool operator==(const Roi&) const = default;
};

Box Intersect(const Box& a, const Box& b);

// Clamps the box to [0, width] x [0, height]. Returns nullopt when nothing
// of the box remains inside the image.
std::optional<Roi> ClampToImage(const Roi& roi, int width, int height);

}  // namespace dermtriage

#endif  // DERMTRIAGE_ROI_H_
