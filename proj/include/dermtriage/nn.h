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

#ifndef DERMTRIAGE_NN_H_
#define DERMTRIAGE_NN_H_

// Minimal CPU neural-network backend: CHW float tensors, im2col convolution
// on Eigen GEMMs, and SGD with momentum. Forward passes are const and keep
// their scratch state in caller-owned caches, so a trained network can be
// shared across threads for inference.

#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include "dermtriage/image.h"

namespace dermtriage::nn {

struct Tensor {
  int channels = 0;
  int height = 0;
  int width = 0;
  std::vector<float> data;

  Tensor() = default;
  Tensor(int c, int h, int w)
      : channels(c), height(h), width(w), data(std::size_t(c) * h * w, 0.f) {}

  std::size_t size() const { return data.size(); }
  float& at(int c, int y, int x) {
    return data[(std::size_t(c) * height + y) * width + x];
  }
  float at(int c, int y, int x) const {
    return data[(std::size_t(c) * height + y) * width + x];
  }
};

// Converts RGB bytes to a normalized 3-channel tensor.
Tensor FromImage(const Image& image);

struct Param {
  std::string name;
  std::vector<int> shape;
  std::vector<float> value;
  std::vector<float> grad;
  std::vector<float> velocity;
  bool trainable = true;

  Param() = default;
  Param(std::string n, std::vector<int> s);
  std::size_t size() const { return value.size(); }
};

class Conv2d {
 public:
  Conv2d() = default;
  Conv2d(const std::string& name, int in, int out, int kernel, int stride,
         int pad);

  void Init(std::mt19937_64& rng);
  // `cols` receives the im2col buffer needed by Backward; pass nullptr for
  // inference.
  Tensor Forward(const Tensor& x, std::vector<float>* cols) const;
  // Accumulates parameter gradients and returns dL/dx when `need_input_grad`.
  Tensor Backward(const Tensor& x, const std::vector<float>& cols,
                  const Tensor& grad_out, bool need_input_grad);

  int in_channels() const { return in_; }
  int out_channels() const { return out_; }
  Param weight;
  Param bias;

 private:
  int OutSize(int n) const { return (n + 2 * pad_ - kernel_) / stride_ + 1; }
  void Im2Col(const Tensor& x, int oh, int ow, std::vector<float>& cols) const;

  int in_ = 0, out_ = 0, kernel_ = 1, stride_ = 1, pad_ = 0;
};

class Linear {
 public:
  Linear() = default;
  Linear(const std::string& name, int in, int out);
  void Init(std::mt19937_64& rng, float scale);
  std::vector<float> Forward(const std::vector<float>& x) const;
  std::vector<float> Backward(const std::vector<float>& x,
                              const std::vector<float>& grad_out);
  int in_features() const { return in_; }
  int out_features() const { return out_; }
  Param weight;
  Param bias;

 private:
  int in_ = 0, out_ = 0;
};

void ReluInPlace(Tensor& t);
// Zeroes gradient entries where the ReLU output was not positive.
void ReluBackward(const Tensor& relu_out, Tensor& grad);

std::vector<float> GlobalAveragePool(const Tensor& t);
Tensor GlobalAveragePoolBackward(const std::vector<float>& grad, int channels,
                                 int height, int width);

Tensor Upsample2x(const Tensor& t, int out_h, int out_w);
// Sums the gradient of each 2x2 upsampled block back to its source cell.
Tensor Upsample2xBackward(const Tensor& grad, int in_h, int in_w);

double Sigmoid(double x);

struct SgdConfig {
  double momentum = 0.9;
  double weight_decay = 1e-4;
};

// PyTorch-style SGD: v = m v + (g + wd w); w -= lr v. Clears gradients.
void SgdStep(const std::vector<Param*>& params, double lr, const SgdConfig& cfg);
void ZeroGrad(const std::vector<Param*>& params);
std::size_t CountParams(const std::vector<Param*>& params, bool trainable_only);

// Self-describing binary weight file (names, shapes, float32 values).
void WriteParams(const std::vector<const Param*>& params, const std::string& path);
// Loads values into params matched by name; shapes must agree.
void ReadParams(const std::vector<Param*>& params, const std::string& path);

}  // namespace dermtriage::nn

#endif  // DERMTRIAGE_NN_H_
