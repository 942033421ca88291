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

#include "dermtriage/nn.h"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <map>

#include <Eigen/Core>

#include "dermtriage/error.h"

namespace dermtriage::nn {
namespace {

using RowMatrix = Eigen::Matrix<float, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MatrixMap = Eigen::Map<RowMatrix>;
using ConstMatrixMap = Eigen::Map<const RowMatrix>;

constexpr float kPixelMean = 0.5f;
constexpr float kPixelScale = 4.0f;
constexpr char kWeightsMagic[4] = {'D', 'T', 'W', '1'};

}  // namespace

Tensor FromImage(const Image& image) {
  Tensor t(3, image.height, image.width);
  const std::size_t plane = std::size_t(image.width) * image.height;
  for (std::size_t i = 0; i < plane; ++i) {
    for (int c = 0; c < 3; ++c) {
      t.data[c * plane + i] =
          (image.pixels[i * 3 + c] / 255.0f - kPixelMean) * kPixelScale;
    }
  }
  return t;
}

Param::Param(std::string n, std::vector<int> s) : name(std::move(n)), shape(std::move(s)) {
  std::size_t count = 1;
  for (int d : shape) count *= std::size_t(d);
  value.assign(count, 0.f);
  grad.assign(count, 0.f);
  velocity.assign(count, 0.f);
}

Conv2d::Conv2d(const std::string& name, int in, int out, int kernel, int stride,
               int pad)
    : weight(name + ".weight", {out, in, kernel, kernel}),
      bias(name + ".bias", {out}),
      in_(in),
      out_(out),
      kernel_(kernel),
      stride_(stride),
      pad_(pad) {}

void Conv2d::Init(std::mt19937_64& rng) {
  const double fan_in = double(in_) * kernel_ * kernel_;
  std::normal_distribution<double> dist(0.0, std::sqrt(2.0 / fan_in));
  for (auto& w : weight.value) w = float(dist(rng));
  std::fill(bias.value.begin(), bias.value.end(), 0.f);
}

void Conv2d::Im2Col(const Tensor& x, int oh, int ow, std::vector<float>& cols) const {
  const int k = kernel_;
  const std::size_t n = std::size_t(oh) * ow;
  cols.assign(std::size_t(in_) * k * k * n, 0.f);
  for (int c = 0; c < in_; ++c) {
    for (int ky = 0; ky < k; ++ky) {
      for (int kx = 0; kx < k; ++kx) {
        float* row = cols.data() + ((std::size_t(c) * k + ky) * k + kx) * n;
        for (int oy = 0; oy < oh; ++oy) {
          const int iy = oy * stride_ - pad_ + ky;
          if (iy < 0 || iy >= x.height) continue;
          const float* src = &x.data[(std::size_t(c) * x.height + iy) * x.width];
          float* dst = row + std::size_t(oy) * ow;
          for (int ox = 0; ox < ow; ++ox) {
            const int ix = ox * stride_ - pad_ + kx;
            if (ix >= 0 && ix < x.width) dst[ox] = src[ix];
          }
        }
      }
    }
  }
}

Tensor Conv2d::Forward(const Tensor& x, std::vector<float>* cols_out) const {
  if (x.channels != in_) throw ModelError("conv input channel mismatch");
  const int oh = OutSize(x.height), ow = OutSize(x.width);
  const std::size_t n = std::size_t(oh) * ow;
  const int kk = in_ * kernel_ * kernel_;
  std::vector<float> local;
  std::vector<float>& cols = cols_out ? *cols_out : local;
  Im2Col(x, oh, ow, cols);
  Tensor y(out_, oh, ow);
  MatrixMap out(y.data.data(), out_, Eigen::Index(n));
  out.noalias() = ConstMatrixMap(weight.value.data(), out_, kk) *
                  ConstMatrixMap(cols.data(), kk, Eigen::Index(n));
  for (int o = 0; o < out_; ++o) out.row(o).array() += bias.value[o];
  return y;
}

Tensor Conv2d::Backward(const Tensor& x, const std::vector<float>& cols,
                        const Tensor& grad_out, bool need_input_grad) {
  const int oh = grad_out.height, ow = grad_out.width;
  const Eigen::Index n = Eigen::Index(oh) * ow;
  const int kk = in_ * kernel_ * kernel_;
  ConstMatrixMap dy(grad_out.data.data(), out_, n);
  ConstMatrixMap col(cols.data(), kk, n);
  MatrixMap(weight.grad.data(), out_, kk).noalias() += dy * col.transpose();
  for (int o = 0; o < out_; ++o) bias.grad[o] += dy.row(o).sum();
  if (!need_input_grad) return {};

  RowMatrix dcols = ConstMatrixMap(weight.value.data(), out_, kk).transpose() * dy;
  Tensor dx(in_, x.height, x.width);
  const int k = kernel_;
  for (int c = 0; c < in_; ++c) {
    for (int ky = 0; ky < k; ++ky) {
      for (int kx = 0; kx < k; ++kx) {
        const float* row = dcols.data() + ((std::size_t(c) * k + ky) * k + kx) * n;
        for (int oy = 0; oy < oh; ++oy) {
          const int iy = oy * stride_ - pad_ + ky;
          if (iy < 0 || iy >= x.height) continue;
          float* dst = &dx.data[(std::size_t(c) * x.height + iy) * x.width];
          const float* src = row + std::size_t(oy) * ow;
          for (int ox = 0; ox < ow; ++ox) {
            const int ix = ox * stride_ - pad_ + kx;
            if (ix >= 0 && ix < x.width) dst[ix] += src[ox];
          }
        }
      }
    }
  }
  return dx;
}

Linear::Linear(const std::string& name, int in, int out)
    : weight(name + ".weight", {out, in}), bias(name + ".bias", {out}), in_(in), out_(out) {}

void Linear::Init(std::mt19937_64& rng, float scale) {
  std::normal_distribution<double> dist(0.0, scale / std::sqrt(double(in_)));
  for (auto& w : weight.value) w = float(dist(rng));
  std::fill(bias.value.begin(), bias.value.end(), 0.f);
}

std::vector<float> Linear::Forward(const std::vector<float>& x) const {
  if (int(x.size()) != in_) throw ModelError("linear input size mismatch");
  std::vector<float> y(bias.value);
  for (int o = 0; o < out_; ++o) {
    const float* w = &weight.value[std::size_t(o) * in_];
    double acc = 0;
    for (int i = 0; i < in_; ++i) acc += double(w[i]) * x[i];
    y[o] += float(acc);
  }
  return y;
}

std::vector<float> Linear::Backward(const std::vector<float>& x,
                                    const std::vector<float>& grad_out) {
  std::vector<float> dx(in_, 0.f);
  for (int o = 0; o < out_; ++o) {
    const float g = grad_out[o];
    bias.grad[o] += g;
    float* dw = &weight.grad[std::size_t(o) * in_];
    const float* w = &weight.value[std::size_t(o) * in_];
    for (int i = 0; i < in_; ++i) {
      dw[i] += g * x[i];
      dx[i] += g * w[i];
    }
  }
  return dx;
}

void ReluInPlace(Tensor& t) {
  for (auto& v : t.data) v = v > 0.f ? v : 0.f;
}

void ReluBackward(const Tensor& relu_out, Tensor& grad) {
  for (std::size_t i = 0; i < grad.data.size(); ++i) {
    if (relu_out.data[i] <= 0.f) grad.data[i] = 0.f;
  }
}

std::vector<float> GlobalAveragePool(const Tensor& t) {
  std::vector<float> out(t.channels);
  const std::size_t plane = std::size_t(t.height) * t.width;
  for (int c = 0; c < t.channels; ++c) {
    double acc = 0;
    const float* p = &t.data[c * plane];
    for (std::size_t i = 0; i < plane; ++i) acc += p[i];
    out[c] = float(acc / double(plane));
  }
  return out;
}

Tensor GlobalAveragePoolBackward(const std::vector<float>& grad, int channels,
                                 int height, int width) {
  Tensor g(channels, height, width);
  const std::size_t plane = std::size_t(height) * width;
  for (int c = 0; c < channels; ++c) {
    std::fill_n(g.data.begin() + c * plane, plane, grad[c] / float(plane));
  }
  return g;
}

Tensor Upsample2x(const Tensor& t, int out_h, int out_w) {
  Tensor u(t.channels, out_h, out_w);
  for (int c = 0; c < t.channels; ++c) {
    for (int y = 0; y < out_h; ++y) {
      const int sy = std::min(y / 2, t.height - 1);
      for (int x = 0; x < out_w; ++x) {
        u.at(c, y, x) = t.at(c, sy, std::min(x / 2, t.width - 1));
      }
    }
  }
  return u;
}

Tensor Upsample2xBackward(const Tensor& grad, int in_h, int in_w) {
  Tensor g(grad.channels, in_h, in_w);
  for (int c = 0; c < grad.channels; ++c) {
    for (int y = 0; y < grad.height; ++y) {
      const int sy = std::min(y / 2, in_h - 1);
      for (int x = 0; x < grad.width; ++x) {
        g.at(c, sy, std::min(x / 2, in_w - 1)) += grad.at(c, y, x);
      }
    }
  }
  return g;
}

double Sigmoid(double x) {
  if (x >= 0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

void SgdStep(const std::vector<Param*>& params, double lr, const SgdConfig& cfg) {
  for (Param* p : params) {
    if (!p->trainable) {
      std::fill(p->grad.begin(), p->grad.end(), 0.f);
      continue;
    }
    for (std::size_t i = 0; i < p->value.size(); ++i) {
      const double g = p->grad[i] + cfg.weight_decay * p->value[i];
      p->velocity[i] = float(cfg.momentum * p->velocity[i] + g);
      p->value[i] -= float(lr * p->velocity[i]);
      p->grad[i] = 0.f;
    }
  }
}

void ZeroGrad(const std::vector<Param*>& params) {
  for (Param* p : params) std::fill(p->grad.begin(), p->grad.end(), 0.f);
}

std::size_t CountParams(const std::vector<Param*>& params, bool trainable_only) {
  std::size_t n = 0;
  for (const Param* p : params) {
    if (!trainable_only || p->trainable) n += p->size();
  }
  return n;
}

void WriteParams(const std::vector<const Param*>& params, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write weights '" + path + "'");
  auto put_u32 = [&](std::uint32_t v) { out.write(reinterpret_cast<const char*>(&v), 4); };
  out.write(kWeightsMagic, 4);
  put_u32(std::uint32_t(params.size()));
  for (const Param* p : params) {
    put_u32(std::uint32_t(p->name.size()));
    out.write(p->name.data(), std::streamsize(p->name.size()));
    put_u32(std::uint32_t(p->shape.size()));
    for (int d : p->shape) put_u32(std::uint32_t(d));
    out.write(reinterpret_cast<const char*>(p->value.data()),
              std::streamsize(p->value.size() * sizeof(float)));
  }
  if (!out) throw Error("short write to '" + path + "'");
}

void ReadParams(const std::vector<Param*>& params, const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ModelError("cannot open weights '" + path + "'");
  auto get_u32 = [&] {
    std::uint32_t v = 0;
    in.read(reinterpret_cast<char*>(&v), 4);
    if (!in) throw ModelError("truncated weights file '" + path + "'");
    return v;
  };
  char magic[4];
  in.read(magic, 4);
  if (!in || std::memcmp(magic, kWeightsMagic, 4) != 0) {
    throw ModelError("'" + path + "' is not a weights file");
  }
  std::map<std::string, Param*> by_name;
  for (Param* p : params) by_name[p->name] = p;
  const std::uint32_t count = get_u32();
  std::size_t loaded = 0;
  for (std::uint32_t i = 0; i < count; ++i) {
    std::string name(get_u32(), '\0');
    in.read(name.data(), std::streamsize(name.size()));
    std::vector<int> shape(get_u32());
    for (auto& d : shape) d = int(get_u32());
    auto it = by_name.find(name);
    if (it == by_name.end() || it->second->shape != shape) {
      throw ModelError("weights '" + path + "': unexpected tensor '" + name + "'");
    }
    Param* p = it->second;
    in.read(reinterpret_cast<char*>(p->value.data()),
            std::streamsize(p->value.size() * sizeof(float)));
    if (!in) throw ModelError("truncated weights file '" + path + "'");
    ++loaded;
  }
  if (loaded != params.size()) {
    throw ModelError("weights '" + path + "' is missing tensors");
  }
}

}  // namespace dermtriage::nn
