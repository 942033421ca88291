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

#ifndef DERMTRIAGE_LESION_LABEL_H_
#define DERMTRIAGE_LESION_LABEL_H_

#include <array>
#include <string>
#include <string_view>

namespace dermtriage {

// Biopsy-confirmed lesion types. The enumeration order is the sub-type
// detector's class order.
enum class LesionLabel { kMEL, kNV, kBCC, kAKIEC, kBKL, kDF, kVASC, kOB };

inline constexpr int kNumLesionLabels = 8;

inline constexpr std::array<LesionLabel, kNumLesionLabels> kAllLesionLabels = {
    LesionLabel::kMEL, LesionLabel::kNV,  LesionLabel::kBCC,
    LesionLabel::kAKIEC, LesionLabel::kBKL, LesionLabel::kDF,
    LesionLabel::kVASC, LesionLabel::kOB};

// True for melanoma, basal cell carcinoma and actinic keratosis/Bowen's/SCC.
constexpr bool IsMalignant(LesionLabel label) {
  return label == LesionLabel::kMEL || label == LesionLabel::kBCC ||
         label == LesionLabel::kAKIEC;
}

constexpr int LabelIndex(LesionLabel label) { return static_cast<int>(label); }

std::string_view LabelName(LesionLabel label);

// Throws SchemaError naming the offending value for unknown codes.
LesionLabel ParseLesionLabel(std::string_view code);

}  // namespace dermtriage

#endif  // DERMTRIAGE_LESION_LABEL_H_
