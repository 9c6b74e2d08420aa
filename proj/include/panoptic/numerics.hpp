// Copyright 2026 The Panoptic Affinity Authors.
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

// Dense row-major substrate shared by every stage of the pipeline.
//
// All reductions run in a fixed order (row-major, ascending inner index) so
// results are bit-stable across runs. 64-bit is the working precision; the
// float instantiations exist for cost and bench parity only.

#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <span>
#include <string>
#include <vector>

#include "panoptic/errors.hpp"

namespace panoptic {

/// Reserved label for pixels excluded from the loss (targets) or left
/// unassigned (panoptic outputs). IGNORE and VOID share the value.
inline constexpr std::uint32_t kIgnore = 0xFFFFFFFFu;
inline constexpr std::uint32_t kVoid = kIgnore;

template <typename T>
class BasicMatrix {
 public:
  using value_type = T;

  BasicMatrix() = default;
  BasicMatrix(std::size_t rows, std::size_t cols, T fill = T(0))
      : rows_(rows), cols_(cols), data_(rows * cols, fill) {}
  BasicMatrix(std::size_t rows, std::size_t cols, std::vector<T> data)
      : rows_(rows), cols_(cols), data_(std::move(data)) {
    if (data_.size() != rows_ * cols_) {
      throw DimensionError("matrix data length " + std::to_string(data_.size()) +
                           " != " + std::to_string(rows_) + "x" + std::to_string(cols_));
    }
  }

  static BasicMatrix identity(std::size_t n) {
    BasicMatrix m(n, n);
    for (std::size_t i = 0; i < n; ++i) m(i, i) = T(1);
    return m;
  }

  std::size_t rows() const { return rows_; }
  std::size_t cols() const { return cols_; }
  std::size_t size() const { return data_.size(); }

  T& operator()(std::size_t r, std::size_t c) { return data_[r * cols_ + c]; }
  const T& operator()(std::size_t r, std::size_t c) const { return data_[r * cols_ + c]; }

  std::span<T> row(std::size_t r) { return {data_.data() + r * cols_, cols_}; }
  std::span<const T> row(std::size_t r) const { return {data_.data() + r * cols_, cols_}; }

  std::vector<T>& data() { return data_; }
  const std::vector<T>& data() const { return data_; }

  std::string shape_string() const {
    return "(" + std::to_string(rows_) + "x" + std::to_string(cols_) + ")";
  }

  bool operator==(const BasicMatrix&) const = default;

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<T> data_;
};

/// Height x width x channels, channel-fastest. A Tensor3 viewed as a matrix
/// is the (height*width) x channels pixel matrix.
template <typename T>
class BasicTensor3 {
 public:
  using value_type = T;

  BasicTensor3() = default;
  BasicTensor3(std::size_t height, std::size_t width, std::size_t channels, T fill = T(0))
      : height_(height), width_(width), channels_(channels),
        data_(height * width * channels, fill) {
    check_extents();
  }
  BasicTensor3(std::size_t height, std::size_t width, std::size_t channels, std::vector<T> data)
      : height_(height), width_(width), channels_(channels), data_(std::move(data)) {
    check_extents();
    if (data_.size() != height_ * width_ * channels_) {
      throw DimensionError("tensor data length " + std::to_string(data_.size()) +
                           " != " + shape_string());
    }
  }

  std::size_t height() const { return height_; }
  std::size_t width() const { return width_; }
  std::size_t channels() const { return channels_; }
  std::size_t pixels() const { return height_ * width_; }
  std::size_t size() const { return data_.size(); }

  T& operator()(std::size_t r, std::size_t c, std::size_t k) {
    return data_[(r * width_ + c) * channels_ + k];
  }
  const T& operator()(std::size_t r, std::size_t c, std::size_t k) const {
    return data_[(r * width_ + c) * channels_ + k];
  }

  /// Channel vector of flattened pixel `p`.
  std::span<T> pixel(std::size_t p) { return {data_.data() + p * channels_, channels_}; }
  std::span<const T> pixel(std::size_t p) const {
    return {data_.data() + p * channels_, channels_};
  }

  std::vector<T>& data() { return data_; }
  const std::vector<T>& data() const { return data_; }

  bool same_grid(const BasicTensor3& o) const {
    return height_ == o.height_ && width_ == o.width_;
  }

  std::string shape_string() const {
    return "(" + std::to_string(height_) + "x" + std::to_string(width_) + "x" +
           std::to_string(channels_) + ")";
  }

  /// Pixel-matrix view, copied.
  BasicMatrix<T> as_matrix() const { return BasicMatrix<T>(pixels(), channels_, data_); }

  static BasicTensor3 from_matrix(const BasicMatrix<T>& m, std::size_t height, std::size_t width) {
    if (m.rows() != height * width) {
      throw DimensionError("matrix " + m.shape_string() + " does not cover a " +
                           std::to_string(height) + "x" + std::to_string(width) + " grid");
    }
    return BasicTensor3(height, width, m.cols(), m.data());
  }

  bool operator==(const BasicTensor3&) const = default;

 private:
  void check_extents() const {
    if (height_ == 0 || width_ == 0 || channels_ == 0) {
      throw DimensionError("tensor extents must be >= 1, got " + shape_string());
    }
  }

  std::size_t height_ = 0;
  std::size_t width_ = 0;
  std::size_t channels_ = 0;
  std::vector<T> data_;
};

using Matrix = BasicMatrix<double>;
using Tensor3 = BasicTensor3<double>;
using MatrixF = BasicMatrix<float>;
using Tensor3F = BasicTensor3<float>;

/// Per-pixel non-negative indices; kIgnore marks excluded pixels.
class LabelMap {
 public:
  LabelMap() = default;
  LabelMap(std::size_t height, std::size_t width, std::uint32_t fill = 0)
      : height_(height), width_(width), data_(height * width, fill) {}
  LabelMap(std::size_t height, std::size_t width, std::vector<std::uint32_t> data)
      : height_(height), width_(width), data_(std::move(data)) {
    if (data_.size() != height_ * width_) {
      throw DimensionError("label data length " + std::to_string(data_.size()) + " != " +
                           std::to_string(height_) + "x" + std::to_string(width_));
    }
  }

  std::size_t height() const { return height_; }
  std::size_t width() const { return width_; }
  std::size_t size() const { return data_.size(); }

  std::uint32_t& operator()(std::size_t r, std::size_t c) { return data_[r * width_ + c]; }
  std::uint32_t operator()(std::size_t r, std::size_t c) const { return data_[r * width_ + c]; }
  std::uint32_t& operator[](std::size_t p) { return data_[p]; }
  std::uint32_t operator[](std::size_t p) const { return data_[p]; }

  std::vector<std::uint32_t>& data() { return data_; }
  const std::vector<std::uint32_t>& data() const { return data_; }

  std::size_t count(std::uint32_t value) const {
    return static_cast<std::size_t>(std::count(data_.begin(), data_.end(), value));
  }

  bool operator==(const LabelMap&) const = default;

 private:
  std::size_t height_ = 0;
  std::size_t width_ = 0;
  std::vector<std::uint32_t> data_;
};

template <typename T>
BasicMatrix<T> matmul(const BasicMatrix<T>& a, const BasicMatrix<T>& b) {
  if (a.cols() != b.rows()) {
    throw DimensionError("matmul shape mismatch: " + a.shape_string() + " x " + b.shape_string());
  }
  BasicMatrix<T> out(a.rows(), b.cols());
  for (std::size_t i = 0; i < a.rows(); ++i) {
    for (std::size_t j = 0; j < b.cols(); ++j) {
      T acc = T(0);
      for (std::size_t k = 0; k < a.cols(); ++k) acc += a(i, k) * b(k, j);
      out(i, j) = acc;
    }
  }
  return out;
}

/// a^T b without forming the transpose.
template <typename T>
BasicMatrix<T> matmul_tn(const BasicMatrix<T>& a, const BasicMatrix<T>& b) {
  if (a.rows() != b.rows()) {
    throw DimensionError("matmul_tn shape mismatch: " + a.shape_string() + "^T x " +
                         b.shape_string());
  }
  BasicMatrix<T> out(a.cols(), b.cols());
  for (std::size_t i = 0; i < a.cols(); ++i) {
    for (std::size_t j = 0; j < b.cols(); ++j) {
      T acc = T(0);
      for (std::size_t k = 0; k < a.rows(); ++k) acc += a(k, i) * b(k, j);
      out(i, j) = acc;
    }
  }
  return out;
}

/// a b^T without forming the transpose.
template <typename T>
BasicMatrix<T> matmul_nt(const BasicMatrix<T>& a, const BasicMatrix<T>& b) {
  if (a.cols() != b.cols()) {
    throw DimensionError("matmul_nt shape mismatch: " + a.shape_string() + " x " +
                         b.shape_string() + "^T");
  }
  BasicMatrix<T> out(a.rows(), b.rows());
  for (std::size_t i = 0; i < a.rows(); ++i) {
    for (std::size_t j = 0; j < b.rows(); ++j) {
      T acc = T(0);
      for (std::size_t k = 0; k < a.cols(); ++k) acc += a(i, k) * b(j, k);
      out(i, j) = acc;
    }
  }
  return out;
}

template <typename T>
BasicMatrix<T> transpose(const BasicMatrix<T>& a) {
  BasicMatrix<T> out(a.cols(), a.rows());
  for (std::size_t i = 0; i < a.rows(); ++i)
    for (std::size_t j = 0; j < a.cols(); ++j) out(j, i) = a(i, j);
  return out;
}

template <typename T>
BasicTensor3<T> softmax_channels(const BasicTensor3<T>& t) {
  BasicTensor3<T> out = t;
  for (std::size_t p = 0; p < t.pixels(); ++p) {
    auto v = out.pixel(p);
    const T mx = *std::max_element(v.begin(), v.end());
    T sum = T(0);
    for (auto& x : v) {
      x = std::exp(x - mx);
      sum += x;
    }
    for (auto& x : v) x /= sum;
  }
  return out;
}

/// Ties resolve to the lowest channel index.
template <typename T>
LabelMap argmax_channels(const BasicTensor3<T>& t) {
  LabelMap out(t.height(), t.width());
  for (std::size_t p = 0; p < t.pixels(); ++p) {
    auto v = t.pixel(p);
    std::size_t best = 0;
    for (std::size_t k = 1; k < v.size(); ++k) {
      if (v[k] > v[best]) best = k;
    }
    out[p] = static_cast<std::uint32_t>(best);
  }
  return out;
}

template <typename T>
T max_abs_diff(std::span<const T> a, std::span<const T> b) {
  if (a.size() != b.size()) {
    throw DimensionError("max_abs_diff length mismatch: " + std::to_string(a.size()) + " vs " +
                         std::to_string(b.size()));
  }
  T m = T(0);
  for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
  return m;
}

template <typename T>
T max_abs(std::span<const T> a) {
  T m = T(0);
  for (const T& x : a) m = std::max(m, std::abs(x));
  return m;
}

}  // namespace panoptic
