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

#include "dermtriage/lesion_label.h"

#include "dermtriage/error.h"

namespace dermtriage {
namespace {

constexpr std::array<std::string_view, kNumLesionLabels> kNames = {
    "MEL", "NV", "BCC", "AKIEC", "BKL", "DF", "VASC", "OB"};

}  // namespace

std::string_view LabelName(LesionLabel label) {
  return kNames[LabelIndex(label)];
}

LesionLabel ParseLesionLabel(std::string_view code) {
  for (int i = 0; i < kNumLesionLabels; ++i) {
    if (kNames[i] == code) return kAllLesionLabels[i];
  }
  throw SchemaError("unknown lesion class '" + std::string(code) + "'");
}

}  // namespace dermtriage
