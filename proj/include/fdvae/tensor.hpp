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

// Dense row-major tensor with value semantics. Images use NCHW order.

#ifndef FDVAE_TENSOR_HPP_
#define FDVAE_TENSOR_HPP_

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <initializer_list>
#include <numeric>
#include <span>
#include <sstream>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "fdvae/error.hpp"

namespace fdvae {

using Shape = std::vector<std::size_t>;

// Packet-aligned storage. Eigen's vectorized reductions peel a different
// number of leading elements depending on the buffer address, so unaligned
// storage would make float sums depend on where malloc placed them.
template <typename T>
using Buffer = std::vector<T, Eigen::aligned_allocator<T>>;

inline std::size_t ShapeNumel(const Shape& shape) {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1},
                         std::multiplies<>());
}

inline std::string ShapeString(const Shape& shape) {
  std::ostringstream out;
  out << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) out << ',';
    out << shape[i];
  }
  out << ']';
  return out.str();
}

template <typename T>
class BasicTensor {
 public:
  using value_type = T;

  BasicTensor() = default;
  explicit BasicTensor(Shape shape, T fill = T(0))
      : shape_(std::move(shape)), data_(ShapeNumel(shape_), fill) {}
  BasicTensor(Shape shape, const std::vector<T>& data)
      : BasicTensor(std::move(shape), Buffer<T>(data.begin(), data.end())) {}
  BasicTensor(Shape shape, std::initializer_list<T> data)
      : BasicTensor(std::move(shape), Buffer<T>(data)) {}
  BasicTensor(Shape shape, Buffer<T> data)
      : shape_(std::move(shape)), data_(std::move(data)) {
    if (data_.size() != ShapeNumel(shape_)) {
      throw DataError("ShapeMismatch", "buffer of " +
                                           std::to_string(data_.size()) +
                                           " values for shape " +
                                           ShapeString(shape_));
    }
  }

  const Shape& shape() const { return shape_; }
  std::size_t dim(std::size_t axis) const { return shape_.at(axis); }
  std::size_t rank() const { return shape_.size(); }
  std::size_t size() const { return data_.size(); }
  bool empty() const { return data_.empty(); }

  T* data() { return data_.data(); }
  const T* data() const { return data_.data(); }
  std::span<T> values() { return data_; }
  std::span<const T> values() const { return data_; }
  Buffer<T>& storage() { return data_; }
  const Buffer<T>& storage() const { return data_; }

  T& operator[](std::size_t i) { return data_[i]; }
  const T& operator[](std::size_t i) const { return data_[i]; }

  // 2-D accessors for [rows, cols] tensors.
  T& at(std::size_t r, std::size_t c) { return data_[r * shape_[1] + c]; }
  const T& at(std::size_t r, std::size_t c) const {
    return data_[r * shape_[1] + c];
  }

  void Fill(T value) { std::fill(data_.begin(), data_.end(), value); }

  // Same data, new shape with an equal element count.
  BasicTensor Reshaped(Shape shape) const {
    if (ShapeNumel(shape) != data_.size()) {
      throw DataError("ShapeMismatch", "cannot reshape " + ShapeString(shape_) +
                                           " to " + ShapeString(shape));
    }
    return BasicTensor(std::move(shape), data_);
  }

  bool AllFinite() const {
    return std::all_of(data_.begin(), data_.end(),
                       [](T v) { return std::isfinite(v); });
  }

  template <typename U>
  BasicTensor<U> Cast() const {
    return BasicTensor<U>(shape_, Buffer<U>(data_.begin(), data_.end()));
  }

  BasicTensor& operator+=(const BasicTensor& other) {
    RequireSameShape(other, "+=");
    for (std::size_t i = 0; i < data_.size(); ++i) data_[i] += other.data_[i];
    return *this;
  }

  // this += scale * other
  void AddScaled(const BasicTensor& other, T scale) {
    RequireSameShape(other, "AddScaled");
    for (std::size_t i = 0; i < data_.size(); ++i) {
      data_[i] += scale * other.data_[i];
    }
  }

  void Scale(T factor) {
    for (T& v : data_) v *= factor;
  }

  void RequireShape(const Shape& expected, const char* what) const {
    if (shape_ != expected) {
      throw DataError("ShapeMismatch", std::string(what) + ": expected " +
                                           ShapeString(expected) + ", got " +
                                           ShapeString(shape_));
    }
  }

  void RequireSameShape(const BasicTensor& other, const char* what) const {
    RequireShape(other.shape_, what);
  }

  friend bool operator==(const BasicTensor&, const BasicTensor&) = default;

 private:
  Shape shape_;
  Buffer<T> data_;
};

using Tensor = BasicTensor<float>;

// Columns [begin, begin + width) of a [rows, cols] tensor.
template <typename T>
BasicTensor<T> SliceColumns(const BasicTensor<T>& matrix, std::size_t begin,
                            std::size_t width) {
  const std::size_t rows = matrix.dim(0);
  const std::size_t cols = matrix.dim(1);
  if (begin + width > cols) {
    throw DataError("ShapeMismatch", "column slice out of range");
  }
  BasicTensor<T> out({rows, width});
  for (std::size_t r = 0; r < rows; ++r) {
    std::copy_n(matrix.data() + r * cols + begin, width,
                out.data() + r * width);
  }
  return out;
}

// Writes `block` into columns [begin, begin + block.cols) of `matrix`,
// adding when `accumulate` is set.
template <typename T>
void ScatterColumns(BasicTensor<T>& matrix, std::size_t begin,
                    const BasicTensor<T>& block, bool accumulate) {
  const std::size_t rows = matrix.dim(0);
  const std::size_t cols = matrix.dim(1);
  const std::size_t width = block.dim(1);
  if (block.dim(0) != rows || begin + width > cols) {
    throw DataError("ShapeMismatch", "column scatter out of range");
  }
  for (std::size_t r = 0; r < rows; ++r) {
    T* dst = matrix.data() + r * cols + begin;
    const T* src = block.data() + r * width;
    for (std::size_t c = 0; c < width; ++c) {
      dst[c] = accumulate ? dst[c] + src[c] : src[c];
    }
  }
}

// Rows selected by `indices`, in order.
template <typename T>
BasicTensor<T> GatherRows(const BasicTensor<T>& tensor,
                          std::span<const std::size_t> indices) {
  Shape shape = tensor.shape();
  const std::size_t row = tensor.size() / shape[0];
  shape[0] = indices.size();
  BasicTensor<T> out(shape);
  for (std::size_t i = 0; i < indices.size(); ++i) {
    std::copy_n(tensor.data() + indices[i] * row, row, out.data() + i * row);
  }
  return out;
}

}  // namespace fdvae

#endif  // FDVAE_TENSOR_HPP_
