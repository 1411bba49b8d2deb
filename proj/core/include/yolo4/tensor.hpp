#pragma once

#include <array>
#include <cstddef>
#include <span>
#include <string>
#include <vector>

namespace yolo4 {

/// Extents of a rank-4 (n, c, h, w) tensor.
struct Shape {
  int n = 0;
  int c = 0;
  int h = 0;
  int w = 0;

  std::size_t numel() const noexcept {
    return static_cast<std::size_t>(n) * c * h * w;
  }
  std::size_t plane() const noexcept { return static_cast<std::size_t>(h) * w; }

  friend bool operator==(const Shape&, const Shape&) = default;
};

std::string to_string(const Shape& s);

/// Dense float32 tensor in row-major (n, c, h, w) order. The shape is fixed
/// at construction; element values may be written through data().
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(Shape shape, float fill = 0.0f);
  Tensor(Shape shape, std::vector<float> values);

  const Shape& shape() const noexcept { return shape_; }
  int n() const noexcept { return shape_.n; }
  int c() const noexcept { return shape_.c; }
  int h() const noexcept { return shape_.h; }
  int w() const noexcept { return shape_.w; }
  std::size_t size() const noexcept { return data_.size(); }
  bool empty() const noexcept { return data_.empty(); }

  std::span<float> data() noexcept { return data_; }
  std::span<const float> data() const noexcept { return data_; }

  float& at(int n, int c, int y, int x) noexcept { return data_[index(n, c, y, x)]; }
  float at(int n, int c, int y, int x) const noexcept { return data_[index(n, c, y, x)]; }

  /// Contiguous h*w plane for (n, c).
  std::span<float> plane(int n, int c) noexcept {
    return std::span<float>(data_).subspan(index(n, c, 0, 0), shape_.plane());
  }
  std::span<const float> plane(int n, int c) const noexcept {
    return std::span<const float>(data_).subspan(index(n, c, 0, 0), shape_.plane());
  }

  /// Copy of batch items [first, first + count).
  Tensor batch_slice(int first, int count) const;

  friend bool operator==(const Tensor&, const Tensor&) = default;

 private:
  std::size_t index(int n, int c, int y, int x) const noexcept {
    return ((static_cast<std::size_t>(n) * shape_.c + c) * shape_.h + y) * shape_.w + x;
  }

  Shape shape_{};
  std::vector<float> data_;
};

}  // namespace yolo4
