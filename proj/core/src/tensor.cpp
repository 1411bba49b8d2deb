#include "yolo4/tensor.hpp"

#include <algorithm>

#include "yolo4/error.hpp"

namespace yolo4 {

std::string to_string(const Shape& s) {
  return "(" + std::to_string(s.n) + "," + std::to_string(s.c) + "," + std::to_string(s.h) +
         "," + std::to_string(s.w) + ")";
}

namespace {

void check_extents(const Shape& s) {
  if (s.n < 1) throw DimensionError("n", "batch extent must be >= 1");
  if (s.c < 1) throw DimensionError("c", "channel extent must be >= 1");
  if (s.h < 1) throw DimensionError("h", "height must be >= 1");
  if (s.w < 1) throw DimensionError("w", "width must be >= 1");
}

}  // namespace

Tensor::Tensor(Shape shape, float fill) : shape_(shape) {
  check_extents(shape_);
  data_.assign(shape_.numel(), fill);
}

Tensor::Tensor(Shape shape, std::vector<float> values) : shape_(shape), data_(std::move(values)) {
  check_extents(shape_);
  if (data_.size() != shape_.numel()) {
    throw DimensionError("data", "length " + std::to_string(data_.size()) +
                                     " does not match shape " + to_string(shape_));
  }
}

Tensor Tensor::batch_slice(int first, int count) const {
  if (first < 0 || count < 1 || first + count > shape_.n) {
    throw DimensionError("n", "batch slice out of range");
  }
  Shape s = shape_;
  s.n = count;
  const std::size_t item = static_cast<std::size_t>(shape_.c) * shape_.plane();
  std::vector<float> values(data_.begin() + static_cast<std::ptrdiff_t>(first * item),
                            data_.begin() + static_cast<std::ptrdiff_t>((first + count) * item));
  return Tensor(s, std::move(values));
}

}  // namespace yolo4
