/*
 * Copyright 2026 The FD-VAE Authors.
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *     https://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

// Feed-forward layers with explicit forward/backward passes.
//
// Every layer caches what its backward pass needs during Forward(), so a
// Backward() call always refers to the most recent Forward(). Backward()
// accumulates into parameter gradients and returns the input gradient.
// Convolutions lower to a single GEMM over the whole batch via im2col.

#ifndef FDVAE_LAYERS_HPP_
#define FDVAE_LAYERS_HPP_

#include <Eigen/Core>
#include <cmath>
#include <memory>
#include <random>
#include <string>
#include <vector>

#include "fdvae/random.hpp"
#include "fdvae/tensor.hpp"

namespace fdvae::nn {

template <typename T>
struct Parameter {
  std::string name;
  BasicTensor<T> value;
  BasicTensor<T> grad;

  Parameter() = default;
  Parameter(std::string n, Shape shape)
      : name(std::move(n)), value(shape), grad(shape) {}
};

template <typename T>
using RowMatrix = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename T>
using MatrixMap = Eigen::Map<RowMatrix<T>>;
template <typename T>
using ConstMatrixMap = Eigen::Map<const RowMatrix<T>>;

template <typename T>
class Layer {
 public:
  virtual ~Layer() = default;
  virtual BasicTensor<T> Forward(const BasicTensor<T>& input) = 0;
  virtual BasicTensor<T> Backward(const BasicTensor<T>& grad_output) = 0;
  virtual std::vector<Parameter<T>*> Parameters() { return {}; }
  virtual Shape OutputShape(const Shape& input) const = 0;
  virtual std::string Name() const = 0;
  // Output channel count for conv-like layers, feature count for dense ones.
  virtual std::size_t OutputChannels(const Shape& input) const {
    return OutputShape(input).at(1);
  }
};

namespace internal {

// Geometry of a strided, padded sliding window: an image of `channels` x
// `height` x `width` visited by a kernel producing a `grid_h` x `grid_w` grid.
struct Window {
  std::size_t channels, height, width, kernel, stride, padding, grid_h, grid_w;

  std::size_t Rows() const { return channels * kernel * kernel; }
  std::size_t GridSize() const { return grid_h * grid_w; }
};

// image: [B, C, H, W] -> col: [C*k*k, B*grid]
template <typename T>
void Im2Col(const T* image, std::size_t batch, const Window& w, T* col) {
  const std::size_t cols = batch * w.GridSize();
  const long pad = static_cast<long>(w.padding);
  for (std::size_t c = 0; c < w.channels; ++c) {
    for (std::size_t ki = 0; ki < w.kernel; ++ki) {
      for (std::size_t kj = 0; kj < w.kernel; ++kj) {
        T* row = col + ((c * w.kernel + ki) * w.kernel + kj) * cols;
        for (std::size_t b = 0; b < batch; ++b) {
          const T* plane = image + (b * w.channels + c) * w.height * w.width;
          T* out = row + b * w.GridSize();
          for (std::size_t oh = 0; oh < w.grid_h; ++oh) {
            const long ih = static_cast<long>(oh * w.stride + ki) - pad;
            T* out_row = out + oh * w.grid_w;
            if (ih < 0 || ih >= static_cast<long>(w.height)) {
              std::fill_n(out_row, w.grid_w, T(0));
              continue;
            }
            const T* in_row = plane + ih * w.width;
            for (std::size_t ow = 0; ow < w.grid_w; ++ow) {
              const long iw = static_cast<long>(ow * w.stride + kj) - pad;
              out_row[ow] = (iw < 0 || iw >= static_cast<long>(w.width))
                                ? T(0)
                                : in_row[iw];
            }
          }
        }
      }
    }
  }
}

// Adjoint of Im2Col: col: [C*k*k, B*grid] accumulated into image [B, C, H, W]
// (image must be zeroed by the caller).
template <typename T>
void Col2Im(const T* col, std::size_t batch, const Window& w, T* image) {
  const std::size_t cols = batch * w.GridSize();
  const long pad = static_cast<long>(w.padding);
  for (std::size_t c = 0; c < w.channels; ++c) {
    for (std::size_t ki = 0; ki < w.kernel; ++ki) {
      for (std::size_t kj = 0; kj < w.kernel; ++kj) {
        const T* row = col + ((c * w.kernel + ki) * w.kernel + kj) * cols;
        for (std::size_t b = 0; b < batch; ++b) {
          T* plane = image + (b * w.channels + c) * w.height * w.width;
          const T* in = row + b * w.GridSize();
          for (std::size_t oh = 0; oh < w.grid_h; ++oh) {
            const long ih = static_cast<long>(oh * w.stride + ki) - pad;
            if (ih < 0 || ih >= static_cast<long>(w.height)) continue;
            T* img_row = plane + ih * w.width;
            const T* in_row = in + oh * w.grid_w;
            for (std::size_t ow = 0; ow < w.grid_w; ++ow) {
              const long iw = static_cast<long>(ow * w.stride + kj) - pad;
              if (iw < 0 || iw >= static_cast<long>(w.width)) continue;
              img_row[iw] += in_row[ow];
            }
          }
        }
      }
    }
  }
}

// [B, C, N] <-> [C, B*N]
template <typename T>
void BatchToChannelMajor(const T* src, std::size_t batch, std::size_t channels,
                         std::size_t n, T* dst) {
  for (std::size_t b = 0; b < batch; ++b) {
    for (std::size_t c = 0; c < channels; ++c) {
      std::copy_n(src + (b * channels + c) * n, n, dst + c * batch * n + b * n);
    }
  }
}

template <typename T>
void ChannelMajorToBatch(const T* src, std::size_t batch, std::size_t channels,
                         std::size_t n, T* dst) {
  for (std::size_t b = 0; b < batch; ++b) {
    for (std::size_t c = 0; c < channels; ++c) {
      std::copy_n(src + c * batch * n + b * n, n, dst + (b * channels + c) * n);
    }
  }
}

}  // namespace internal

template <typename T>
void InitUniform(BasicTensor<T>& tensor, double bound, RandomEngine& rng) {
  std::uniform_real_distribution<double> dist(-bound, bound);
  for (T& v : tensor.values()) v = static_cast<T>(dist(rng));
}

// Weight initialization scale: He-uniform for layers feeding a rectifier,
// LeCun-uniform otherwise.
enum class InitKind { kRectifier, kLinear };

inline double InitBound(InitKind kind, double fan_in) {
  return kind == InitKind::kRectifier ? std::sqrt(6.0 / fan_in)
                                      : std::sqrt(3.0 / fan_in);
}

template <typename T>
class Conv2d final : public Layer<T> {
 public:
  Conv2d(std::string name, std::size_t in_channels, std::size_t out_channels,
         std::size_t kernel, std::size_t stride, std::size_t padding)
      : name_(std::move(name)),
        in_(in_channels),
        out_(out_channels),
        kernel_(kernel),
        stride_(stride),
        padding_(padding),
        weight_(name_ + ".weight", {out_channels, in_channels, kernel, kernel}),
        bias_(name_ + ".bias", {out_channels}) {}

  void Initialize(InitKind kind, RandomEngine& rng) {
    InitUniform(weight_.value, InitBound(kind, double(in_ * kernel_ * kernel_)),
                rng);
    bias_.value.Fill(T(0));
  }

  Shape OutputShape(const Shape& input) const override {
    Check(input);
    return {input[0], out_, GridSize(input[2]), GridSize(input[3])};
  }

  BasicTensor<T> Forward(const BasicTensor<T>& input) override {
    const Shape out_shape = OutputShape(input.shape());
    batch_ = input.dim(0);
    window_ = {in_, input.dim(2), input.dim(3), kernel_, stride_, padding_,
               out_shape[2], out_shape[3]};
    const std::size_t cols = batch_ * window_.GridSize();
    col_.assign(window_.Rows() * cols, T(0));
    internal::Im2Col(input.data(), batch_, window_, col_.data());

    Buffer<T> result(out_ * cols);
    MatrixMap<T> y(result.data(), out_, cols);
    y.noalias() = Weights() * ConstMatrixMap<T>(col_.data(), window_.Rows(), cols);
    for (std::size_t o = 0; o < out_; ++o) y.row(o).array() += bias_.value[o];

    BasicTensor<T> output(out_shape);
    internal::ChannelMajorToBatch(result.data(), batch_, out_,
                                  window_.GridSize(), output.data());
    return output;
  }

  BasicTensor<T> Backward(const BasicTensor<T>& grad_output) override {
    const std::size_t cols = batch_ * window_.GridSize();
    Buffer<T> dy(out_ * cols);
    internal::BatchToChannelMajor(grad_output.data(), batch_, out_,
                                  window_.GridSize(), dy.data());
    ConstMatrixMap<T> dy_map(dy.data(), out_, cols);
    ConstMatrixMap<T> col(col_.data(), window_.Rows(), cols);

    MatrixMap<T>(weight_.grad.data(), out_, window_.Rows()).noalias() +=
        dy_map * col.transpose();
    for (std::size_t o = 0; o < out_; ++o) bias_.grad[o] += dy_map.row(o).sum();

    Buffer<T> dcol(window_.Rows() * cols);
    MatrixMap<T>(dcol.data(), window_.Rows(), cols).noalias() =
        Weights().transpose() * dy_map;
    BasicTensor<T> grad_input({batch_, in_, window_.height, window_.width});
    internal::Col2Im(dcol.data(), batch_, window_, grad_input.data());
    return grad_input;
  }

  std::vector<Parameter<T>*> Parameters() override { return {&weight_, &bias_}; }
  std::string Name() const override { return name_; }
  Parameter<T>& weight() { return weight_; }
  Parameter<T>& bias() { return bias_; }

 private:
  std::size_t GridSize(std::size_t extent) const {
    return (extent + 2 * padding_ - kernel_) / stride_ + 1;
  }

  void Check(const Shape& input) const {
    if (input.size() != 4 || input[1] != in_ || input[2] + 2 * padding_ < kernel_ ||
        input[3] + 2 * padding_ < kernel_) {
      throw DataError("ShapeMismatch",
                      name_ + " cannot take input " + ShapeString(input));
    }
  }

  ConstMatrixMap<T> Weights() const {
    return ConstMatrixMap<T>(weight_.value.data(), out_, in_ * kernel_ * kernel_);
  }

  std::string name_;
  std::size_t in_, out_, kernel_, stride_, padding_;
  Parameter<T> weight_, bias_;
  std::size_t batch_ = 0;
  internal::Window window_{};
  Buffer<T> col_;
};

// Transposed convolution, weight layout [in, out, k, k].
template <typename T>
class ConvTranspose2d final : public Layer<T> {
 public:
  ConvTranspose2d(std::string name, std::size_t in_channels,
                  std::size_t out_channels, std::size_t kernel,
                  std::size_t stride, std::size_t padding)
      : name_(std::move(name)),
        in_(in_channels),
        out_(out_channels),
        kernel_(kernel),
        stride_(stride),
        padding_(padding),
        weight_(name_ + ".weight", {in_channels, out_channels, kernel, kernel}),
        bias_(name_ + ".bias", {out_channels}) {}

  void Initialize(InitKind kind, RandomEngine& rng) {
    const double fan_in =
        double(in_ * kernel_ * kernel_) / double(stride_ * stride_);
    InitUniform(weight_.value, InitBound(kind, fan_in), rng);
    bias_.value.Fill(T(0));
  }

  Shape OutputShape(const Shape& input) const override {
    if (input.size() != 4 || input[1] != in_) {
      throw DataError("ShapeMismatch",
                      name_ + " cannot take input " + ShapeString(input));
    }
    return {input[0], out_, Extent(input[2]), Extent(input[3])};
  }

  BasicTensor<T> Forward(const BasicTensor<T>& input) override {
    const Shape out_shape = OutputShape(input.shape());
    batch_ = input.dim(0);
    window_ = {out_, out_shape[2], out_shape[3], kernel_, stride_, padding_,
               input.dim(2), input.dim(3)};
    const std::size_t cols = batch_ * window_.GridSize();
    input_cm_.resize(in_ * cols);
    internal::BatchToChannelMajor(input.data(), batch_, in_, window_.GridSize(),
                                  input_cm_.data());

    Buffer<T> col(window_.Rows() * cols);
    MatrixMap<T>(col.data(), window_.Rows(), cols).noalias() =
        Weights().transpose() * ConstMatrixMap<T>(input_cm_.data(), in_, cols);
    BasicTensor<T> output(out_shape);
    internal::Col2Im(col.data(), batch_, window_, output.data());
    const std::size_t plane = out_shape[2] * out_shape[3];
    for (std::size_t b = 0; b < batch_; ++b) {
      for (std::size_t o = 0; o < out_; ++o) {
        T* p = output.data() + (b * out_ + o) * plane;
        for (std::size_t i = 0; i < plane; ++i) p[i] += bias_.value[o];
      }
    }
    return output;
  }

  BasicTensor<T> Backward(const BasicTensor<T>& grad_output) override {
    const std::size_t cols = batch_ * window_.GridSize();
    Buffer<T> dcol(window_.Rows() * cols);
    internal::Im2Col(grad_output.data(), batch_, window_, dcol.data());
    ConstMatrixMap<T> dcol_map(dcol.data(), window_.Rows(), cols);
    ConstMatrixMap<T> x(input_cm_.data(), in_, cols);

    MatrixMap<T>(weight_.grad.data(), in_, window_.Rows()).noalias() +=
        x * dcol_map.transpose();
    const std::size_t plane = window_.height * window_.width;
    for (std::size_t b = 0; b < batch_; ++b) {
      for (std::size_t o = 0; o < out_; ++o) {
        const T* p = grad_output.data() + (b * out_ + o) * plane;
        T sum = 0;
        for (std::size_t i = 0; i < plane; ++i) sum += p[i];
        bias_.grad[o] += sum;
      }
    }

    Buffer<T> dx(in_ * cols);
    MatrixMap<T>(dx.data(), in_, cols).noalias() = Weights() * dcol_map;
    BasicTensor<T> grad_input({batch_, in_, window_.grid_h, window_.grid_w});
    internal::ChannelMajorToBatch(dx.data(), batch_, in_, window_.GridSize(),
                                  grad_input.data());
    return grad_input;
  }

  std::vector<Parameter<T>*> Parameters() override { return {&weight_, &bias_}; }
  std::string Name() const override { return name_; }

 private:
  std::size_t Extent(std::size_t in) const {
    return (in - 1) * stride_ + kernel_ - 2 * padding_;
  }

  ConstMatrixMap<T> Weights() const {
    return ConstMatrixMap<T>(weight_.value.data(), in_, out_ * kernel_ * kernel_);
  }

  std::string name_;
  std::size_t in_, out_, kernel_, stride_, padding_;
  Parameter<T> weight_, bias_;
  std::size_t batch_ = 0;
  internal::Window window_{};
  Buffer<T> input_cm_;
};

// Affine map on [B, in] -> [B, out], weight layout [out, in].
template <typename T>
class Linear final : public Layer<T> {
 public:
  Linear(std::string name, std::size_t in_features, std::size_t out_features)
      : name_(std::move(name)),
        in_(in_features),
        out_(out_features),
        weight_(name_ + ".weight", {out_features, in_features}),
        bias_(name_ + ".bias", {out_features}) {}

  void Initialize(InitKind kind, RandomEngine& rng) {
    InitUniform(weight_.value, InitBound(kind, double(in_)), rng);
    bias_.value.Fill(T(0));
  }

  Shape OutputShape(const Shape& input) const override {
    if (input.size() != 2 || input[1] != in_) {
      throw DataError("ShapeMismatch",
                      name_ + " expects [B," + std::to_string(in_) + "], got " +
                          ShapeString(input));
    }
    return {input[0], out_};
  }

  BasicTensor<T> Forward(const BasicTensor<T>& input) override {
    const Shape out_shape = OutputShape(input.shape());
    input_ = input;
    BasicTensor<T> output(out_shape);
    const std::size_t batch = input.dim(0);
    MatrixMap<T> y(output.data(), batch, out_);
    y.noalias() = ConstMatrixMap<T>(input.data(), batch, in_) * Weights().transpose();
    for (std::size_t r = 0; r < batch; ++r) {
      for (std::size_t o = 0; o < out_; ++o) y(r, o) += bias_.value[o];
    }
    return output;
  }

  BasicTensor<T> Backward(const BasicTensor<T>& grad_output) override {
    const std::size_t batch = input_.dim(0);
    grad_output.RequireShape({batch, out_}, "Linear::Backward");
    ConstMatrixMap<T> dy(grad_output.data(), batch, out_);
    MatrixMap<T>(weight_.grad.data(), out_, in_).noalias() +=
        dy.transpose() * ConstMatrixMap<T>(input_.data(), batch, in_);
    for (std::size_t o = 0; o < out_; ++o) bias_.grad[o] += dy.col(o).sum();
    BasicTensor<T> grad_input({batch, in_});
    MatrixMap<T>(grad_input.data(), batch, in_).noalias() = dy * Weights();
    return grad_input;
  }

  std::vector<Parameter<T>*> Parameters() override { return {&weight_, &bias_}; }
  std::string Name() const override { return name_; }
  Parameter<T>& weight() { return weight_; }
  Parameter<T>& bias() { return bias_; }
  std::size_t in_features() const { return in_; }
  std::size_t out_features() const { return out_; }

 private:
  ConstMatrixMap<T> Weights() const {
    return ConstMatrixMap<T>(weight_.value.data(), out_, in_);
  }

  std::string name_;
  std::size_t in_, out_;
  Parameter<T> weight_, bias_;
  BasicTensor<T> input_;
};

// Leaky rectifier; slope 0 gives the plain ReLU.
template <typename T>
class LeakyRelu final : public Layer<T> {
 public:
  explicit LeakyRelu(T negative_slope = T(0)) : slope_(negative_slope) {}

  Shape OutputShape(const Shape& input) const override { return input; }

  BasicTensor<T> Forward(const BasicTensor<T>& input) override {
    input_ = input;
    BasicTensor<T> output = input;
    for (T& v : output.values()) v = v > T(0) ? v : slope_ * v;
    return output;
  }

  BasicTensor<T> Backward(const BasicTensor<T>& grad_output) override {
    BasicTensor<T> grad = grad_output;
    for (std::size_t i = 0; i < grad.size(); ++i) {
      if (!(input_[i] > T(0))) grad[i] *= slope_;
    }
    return grad;
  }

  std::string Name() const override {
    return slope_ == T(0) ? "relu" : "leaky_relu";
  }

 private:
  T slope_;
  BasicTensor<T> input_;
};

// Owning chain of layers.
template <typename T>
class Sequential {
 public:
  template <typename L>
  L& Add(std::unique_ptr<L> layer) {
    L& ref = *layer;
    layers_.push_back(std::move(layer));
    return ref;
  }

  BasicTensor<T> Forward(const BasicTensor<T>& input) {
    BasicTensor<T> x = input;
    for (auto& layer : layers_) x = layer->Forward(x);
    return x;
  }

  BasicTensor<T> Backward(const BasicTensor<T>& grad_output) {
    BasicTensor<T> g = grad_output;
    for (auto it = layers_.rbegin(); it != layers_.rend(); ++it) {
      g = (*it)->Backward(g);
    }
    return g;
  }

  std::vector<Parameter<T>*> Parameters() {
    std::vector<Parameter<T>*> params;
    for (auto& layer : layers_) {
      for (auto* p : layer->Parameters()) params.push_back(p);
    }
    return params;
  }

  // Output shape after each layer, for architecture conformance checks.
  std::vector<std::pair<std::string, Shape>> TraceShapes(Shape input) const {
    std::vector<std::pair<std::string, Shape>> trace;
    for (const auto& layer : layers_) {
      input = layer->OutputShape(input);
      trace.emplace_back(layer->Name(), input);
    }
    return trace;
  }

  std::size_t size() const { return layers_.size(); }
  Layer<T>& layer(std::size_t i) { return *layers_.at(i); }

 private:
  std::vector<std::unique_ptr<Layer<T>>> layers_;
};

template <typename T>
void ZeroGrad(const std::vector<Parameter<T>*>& params) {
  for (auto* p : params) p->grad.Fill(T(0));
}

}  // namespace fdvae::nn

#endif  // FDVAE_LAYERS_HPP_
