// Copyright 2026 The qunlearn Authors. All Rights Reserved.
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

#pragma once

#include <Eigen/Core>

#include <cmath>
#include <cstddef>
#include <numeric>
#include <string>
#include <string_view>
#include <unordered_map>
#include <utility>
#include <vector>

#include "qunlearn/errors.hpp"

namespace qunlearn {

using Shape = std::vector<std::size_t>;

/// Number of elements described by `shape`. Every dimension must be positive.
std::size_t shape_size(const Shape& shape);

std::string shape_string(const Shape& shape);

/// Dense row-major tensor backed by an Eigen column vector.
///
/// Rank-2 tensors expose a row-major matrix view so layer code can be written
/// as ordinary Eigen expressions without copying.
template <typename Scalar>
class BasicTensor {
 public:
  using Vector = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;
  using RowMajorMatrix =
      Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
  using MatrixMap = Eigen::Map<RowMajorMatrix>;
  using ConstMatrixMap = Eigen::Map<const RowMajorMatrix>;

  BasicTensor() = default;

  explicit BasicTensor(Shape shape)
      : shape_(std::move(shape)), data_(Vector::Zero(shape_size(shape_))) {}

  BasicTensor(Shape shape, Vector data)
      : shape_(std::move(shape)), data_(std::move(data)) {
    if (static_cast<std::size_t>(data_.size()) != shape_size(shape_)) {
      throw ValidationError("tensor data length " +
                            std::to_string(data_.size()) +
                            " does not match shape " + shape_string(shape_));
    }
  }

  BasicTensor(Shape shape, std::initializer_list<Scalar> values)
      : BasicTensor(std::move(shape),
                    Eigen::Map<const Vector>(values.begin(),
                                             static_cast<Eigen::Index>(
                                                 values.size()))) {}

  static BasicTensor zeros_like(const BasicTensor& other) {
    return BasicTensor(other.shape_);
  }

  const Shape& shape() const noexcept { return shape_; }
  std::size_t rank() const noexcept { return shape_.size(); }
  std::size_t size() const noexcept {
    return static_cast<std::size_t>(data_.size());
  }

  Vector& data() noexcept { return data_; }
  const Vector& data() const noexcept { return data_; }

  Scalar& operator[](std::size_t i) { return data_[static_cast<Eigen::Index>(i)]; }
  Scalar operator[](std::size_t i) const {
    return data_[static_cast<Eigen::Index>(i)];
  }

  /// Row-major view; rank-1 tensors are viewed as a single row.
  MatrixMap matrix() {
    auto [r, c] = matrix_dims();
    return MatrixMap(data_.data(), r, c);
  }
  ConstMatrixMap matrix() const {
    auto [r, c] = matrix_dims();
    return ConstMatrixMap(data_.data(), r, c);
  }

  bool all_finite() const { return data_.allFinite(); }

  friend bool operator==(const BasicTensor& a, const BasicTensor& b) {
    return a.shape_ == b.shape_ && a.data_ == b.data_;
  }

 private:
  std::pair<Eigen::Index, Eigen::Index> matrix_dims() const {
    if (shape_.size() == 1) return {1, static_cast<Eigen::Index>(shape_[0])};
    if (shape_.size() != 2) {
      throw ValidationError("matrix view requires rank 1 or 2, got shape " +
                            shape_string(shape_));
    }
    return {static_cast<Eigen::Index>(shape_[0]),
            static_cast<Eigen::Index>(shape_[1])};
  }

  Shape shape_;
  Vector data_;
};

using Tensor = BasicTensor<double>;

/// Named parameter collection with stable insertion order.
///
/// Two snapshots are aligned when they hold the same names in the same order
/// with identical shapes. Every cross-snapshot operation requires alignment.
class WeightSnapshot {
 public:
  struct Entry {
    std::string name;
    Tensor tensor;
  };

  void insert(std::string name, Tensor tensor);

  bool contains(std::string_view name) const;
  const Tensor& at(std::string_view name) const;
  Tensor& at(std::string_view name);

  std::size_t size() const noexcept { return entries_.size(); }
  bool empty() const noexcept { return entries_.empty(); }
  std::size_t parameter_count() const;

  auto begin() noexcept { return entries_.begin(); }
  auto end() noexcept { return entries_.end(); }
  auto begin() const noexcept { return entries_.begin(); }
  auto end() const noexcept { return entries_.end(); }
  const Entry& operator[](std::size_t i) const { return entries_[i]; }
  Entry& operator[](std::size_t i) { return entries_[i]; }

  /// Same names and shapes, all values zero.
  static WeightSnapshot zeros_like(const WeightSnapshot& other);

  friend bool operator==(const WeightSnapshot& a, const WeightSnapshot& b) {
    if (a.entries_.size() != b.entries_.size()) return false;
    for (std::size_t i = 0; i < a.entries_.size(); ++i) {
      if (a.entries_[i].name != b.entries_[i].name ||
          !(a.entries_[i].tensor == b.entries_[i].tensor)) {
        return false;
      }
    }
    return true;
  }

 private:
  std::vector<Entry> entries_;
  std::unordered_map<std::string, std::size_t> index_;
};

/// Layer index from the "layer.<k>.<role>" naming convention, or -1.
int layer_of(std::string_view name);

bool aligned(const WeightSnapshot& a, const WeightSnapshot& b);

/// Throws AlignmentError listing every offending name.
void require_aligned(const WeightSnapshot& a, const WeightSnapshot& b);

}  // namespace qunlearn
