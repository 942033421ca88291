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

#ifndef DERMTRIAGE_IMAGE_H_
#define DERMTRIAGE_IMAGE_H_

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "dermtriage/roi.h"

namespace dermtriage {

// 8-bit RGB image, row-major, channels interleaved.
struct Image {
  int width = 0;
  int height = 0;
  std::vector<std::uint8_t> pixels;

  Image() = default;
  Image(int w, int h) : width(w), height(h), pixels(std::size_t(w) * h * 3) {}

  bool empty() const { return pixels.empty(); }
  std::uint8_t& at(int x, int y, int c) {
    return pixels[(std::size_t(y) * width + x) * 3 + c];
  }
  std::uint8_t at(int x, int y, int c) const {
    return pixels[(std::size_t(y) * width + x) * 3 + c];
  }
  bool operator==(const Image&) const = default;
};

// Decoding goes through OpenCV; any format it reads is accepted.
Image LoadImage(const std::string& path);
Image DecodeImage(std::span<const std::uint8_t> bytes);
void SaveImagePng(const Image& image, const std::string& path);
std::vector<std::uint8_t> EncodePng(const Image& image);

// Area interpolation when shrinking, bilinear when enlarging.
Image Resize(const Image& image, int width, int height);

// Square crop around the ROI: the tight box is grown to a square of edge
// max(width, height) about the ROI center, pixels falling outside the image
// replicate the nearest edge pixel, and the square is resized to side x side.
// Throws DataError when the ROI does not intersect the image.
Image ExtractCrop(const Image& image, const Roi& roi, int side);

// Pixel bounds of the square ExtractCrop samples, before clamping.
struct CropWindow {
  int x0, y0, edge;
};
CropWindow SquareWindow(const Roi& roi);

}  // namespace dermtriage

#endif  // DERMTRIAGE_IMAGE_H_
