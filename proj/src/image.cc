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

#include "dermtriage/image.h"

#include <algorithm>
#include <cmath>

#include <opencv2/core.hpp>
#include <opencv2/imgcodecs.hpp>
#include <opencv2/imgproc.hpp>

#include "dermtriage/error.h"

namespace dermtriage {
namespace {

Image FromBgrMat(const cv::Mat& bgr) {
  cv::Mat rgb;
  if (bgr.channels() == 1) {
    cv::cvtColor(bgr, rgb, cv::COLOR_GRAY2RGB);
  } else if (bgr.channels() == 4) {
    cv::cvtColor(bgr, rgb, cv::COLOR_BGRA2RGB);
  } else {
    cv::cvtColor(bgr, rgb, cv::COLOR_BGR2RGB);
  }
  if (rgb.depth() != CV_8U) rgb.convertTo(rgb, CV_8U);
  Image out(rgb.cols, rgb.rows);
  for (int y = 0; y < rgb.rows; ++y) {
    std::copy_n(rgb.ptr<std::uint8_t>(y), std::size_t(rgb.cols) * 3,
                out.pixels.begin() + std::ptrdiff_t(y) * rgb.cols * 3);
  }
  return out;
}

cv::Mat ToBgrMat(const Image& image) {
  cv::Mat rgb(image.height, image.width, CV_8UC3,
              const_cast<std::uint8_t*>(image.pixels.data()));
  cv::Mat bgr;
  cv::cvtColor(rgb, bgr, cv::COLOR_RGB2BGR);
  return bgr;
}

}  // namespace

Image LoadImage(const std::string& path) {
  cv::Mat mat = cv::imread(path, cv::IMREAD_COLOR);
  if (mat.empty()) throw DecodeError("cannot decode image '" + path + "'");
  return FromBgrMat(mat);
}

Image DecodeImage(std::span<const std::uint8_t> bytes) {
  if (bytes.empty()) throw DecodeError("empty image payload");
  cv::Mat buf(1, int(bytes.size()), CV_8U,
              const_cast<std::uint8_t*>(bytes.data()));
  cv::Mat mat;
  try {
    mat = cv::imdecode(buf, cv::IMREAD_COLOR);
  } catch (const cv::Exception& e) {
    throw DecodeError(std::string("cannot decode image payload: ") + e.what());
  }
  if (mat.empty()) throw DecodeError("cannot decode image payload");
  return FromBgrMat(mat);
}

void SaveImagePng(const Image& image, const std::string& path) {
  if (!cv::imwrite(path, ToBgrMat(image))) {
    throw Error("cannot write image '" + path + "'");
  }
}

std::vector<std::uint8_t> EncodePng(const Image& image) {
  std::vector<std::uint8_t> out;
  cv::imencode(".png", ToBgrMat(image), out);
  return out;
}

Image Resize(const Image& image, int width, int height) {
  if (image.width == width && image.height == height) return image;
  cv::Mat src(image.height, image.width, CV_8UC3,
              const_cast<std::uint8_t*>(image.pixels.data()));
  Image out(width, height);
  cv::Mat dst(height, width, CV_8UC3, out.pixels.data());
  const bool shrink = width < image.width && height < image.height;
  cv::resize(src, dst, cv::Size(width, height), 0, 0,
             shrink ? cv::INTER_AREA : cv::INTER_LINEAR);
  return out;
}

CropWindow SquareWindow(const Roi& roi) {
  const int edge = std::max(1, int(std::lround(std::max(roi.width, roi.height))));
  const int x0 = int(std::lround(roi.x_center - edge / 2.0));
  const int y0 = int(std::lround(roi.y_center - edge / 2.0));
  return {x0, y0, edge};
}

Image ExtractCrop(const Image& image, const Roi& roi, int side) {
  if (side <= 0) throw ConfigError("crop side must be positive");
  const Box inter = Intersect(roi.Corners(),
                              Box{0, 0, double(image.width), double(image.height)});
  if (image.empty() || inter.Area() <= 0) {
    throw DataError("ROI does not intersect the image");
  }
  const CropWindow win = SquareWindow(roi);
  // Sampling with clamped indices is edge replication of the clamped window.
  Image square(win.edge, win.edge);
  for (int y = 0; y < win.edge; ++y) {
    const int sy = std::clamp(win.y0 + y, 0, image.height - 1);
    for (int x = 0; x < win.edge; ++x) {
      const int sx = std::clamp(win.x0 + x, 0, image.width - 1);
      for (int c = 0; c < 3; ++c) square.at(x, y, c) = image.at(sx, sy, c);
    }
  }
  return Resize(square, side, side);
}

}  // namespace dermtriage
