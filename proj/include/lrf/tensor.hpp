#pragma once

#include <cstdint>
#include <initializer_list>
#include <span>
#include <string>
#include <vector>

namespace lrf {

/// Extent of a dense tensor, one entry per axis. Never empty; every axis is at
/// least one element wide.
class TensorShape {
public:
  TensorShape() = default;
  TensorShape(std::initializer_list<std::int64_t> dims);
  explicit TensorShape(std::vector<std::int64_t> dims);

  const std::vector<std::int64_t>& dims() const { return dims_; }
  std::size_t rank() const { return dims_.size(); }
  std::int64_t operator[](std::size_t axis) const { return dims_[axis]; }
  std::int64_t elements() const;
  bool empty() const { return dims_.empty(); }

  std::string to_string() const;

  friend bool operator==(const TensorShape&, const TensorShape&) = default;

private:
  std::vector<std::int64_t> dims_;
};

/// Row-major float32 tensor. Computation may promote to double internally, but
/// storage and serialization stay 32-bit.
class DenseTensor {
public:
  DenseTensor() = default;
  explicit DenseTensor(TensorShape shape);
  DenseTensor(TensorShape shape, std::vector<float> data);

  const TensorShape& shape() const { return shape_; }
  std::span<const float> data() const { return data_; }
  std::span<float> data() { return data_; }
  std::int64_t size() const { return static_cast<std::int64_t>(data_.size()); }

  float operator[](std::int64_t i) const { return data_[static_cast<std::size_t>(i)]; }
  float& operator[](std::int64_t i) { return data_[static_cast<std::size_t>(i)]; }

  /// Same data, new extent. Element counts must agree.
  DenseTensor reshaped(TensorShape shape) const;

  bool all_finite() const;

  friend bool operator==(const DenseTensor&, const DenseTensor&) = default;

private:
  TensorShape shape_;
  std::vector<float> data_;
};

/// Row-major strides for `dims`.
std::vector<std::int64_t> row_major_strides(std::span<const std::int64_t> dims);

std::int64_t product(std::span<const std::int64_t> values);

} // namespace lrf
