#include "lrf/tensor.hpp"

#include "lrf/error.hpp"

#include <cmath>
#include <limits>

namespace lrf {

namespace {

void check_dims(const std::vector<std::int64_t>& dims) {
  if (dims.empty()) throw ShapeError("tensor shape must have at least one axis");
  std::int64_t total = 1;
  for (auto d : dims) {
    if (d < 1) throw ShapeError("tensor dimension must be >= 1, got " + std::to_string(d));
    if (total > std::numeric_limits<std::int64_t>::max() / d)
      throw ShapeError("tensor element count overflows 64 bits");
    total *= d;
  }
}

} // namespace

TensorShape::TensorShape(std::initializer_list<std::int64_t> dims) : dims_(dims) {
  check_dims(dims_);
}

TensorShape::TensorShape(std::vector<std::int64_t> dims) : dims_(std::move(dims)) {
  check_dims(dims_);
}

std::int64_t TensorShape::elements() const {
  return dims_.empty() ? 0 : product(dims_);
}

std::string TensorShape::to_string() const {
  std::string out = "(";
  for (std::size_t i = 0; i < dims_.size(); ++i) {
    if (i) out += ",";
    out += std::to_string(dims_[i]);
  }
  return out + ")";
}

DenseTensor::DenseTensor(TensorShape shape)
    : shape_(std::move(shape)), data_(static_cast<std::size_t>(shape_.elements()), 0.0f) {}

DenseTensor::DenseTensor(TensorShape shape, std::vector<float> data)
    : shape_(std::move(shape)), data_(std::move(data)) {
  if (static_cast<std::int64_t>(data_.size()) != shape_.elements())
    throw ShapeError("tensor data length " + std::to_string(data_.size()) +
                     " does not match shape " + shape_.to_string());
}

DenseTensor DenseTensor::reshaped(TensorShape shape) const {
  if (shape.elements() != shape_.elements())
    throw ShapeError("cannot reshape " + shape_.to_string() + " to " + shape.to_string());
  return DenseTensor(std::move(shape), data_);
}

bool DenseTensor::all_finite() const {
  for (float v : data_)
    if (!std::isfinite(v)) return false;
  return true;
}

std::vector<std::int64_t> row_major_strides(std::span<const std::int64_t> dims) {
  std::vector<std::int64_t> strides(dims.size(), 1);
  for (std::size_t i = dims.size(); i-- > 1;) strides[i - 1] = strides[i] * dims[i];
  return strides;
}

std::int64_t product(std::span<const std::int64_t> values) {
  std::int64_t p = 1;
  for (auto v : values) p *= v;
  return p;
}

} // namespace lrf
