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

#include "dermtriage/roi.h"

#include <algorithm>

namespace dermtriage {

Box Intersect(const Box& a, const Box& b) {
  return {std::max(a.x1, b.x1), std::max(a.y1, b.y1), std::min(a.x2, b.x2),
          std::min(a.y2, b.y2)};
}

std::optional<Roi> ClampToImage(const Roi& roi, int width, int height) {
  Box clamped = Intersect(roi.Corners(), Box{0, 0, double(width), double(height)});
  if (clamped.Area() <= 0) return std::nullopt;
  return Roi::FromCorners(clamped, roi.label);
}

}  // namespace dermtriage
