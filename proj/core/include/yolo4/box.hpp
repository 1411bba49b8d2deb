#pragma once

namespace yolo4 {

/// Axis-aligned box in pixel coordinates, corner form.
struct BBox {
  double x1 = 0;
  double y1 = 0;
  double x2 = 0;
  double y2 = 0;

  double width() const noexcept { return x2 - x1; }
  double height() const noexcept { return y2 - y1; }
  double area() const noexcept { return width() * height(); }
  double cx() const noexcept { return 0.5 * (x1 + x2); }
  double cy() const noexcept { return 0.5 * (y1 + y2); }

  /// Finite with x1 <= x2 and y1 <= y2.
  bool valid() const noexcept;

  static BBox from_center(double cx, double cy, double w, double h) noexcept {
    return {cx - 0.5 * w, cy - 0.5 * h, cx + 0.5 * w, cy + 0.5 * h};
  }

  friend bool operator==(const BBox&, const BBox&) = default;
};

struct Detection {
  BBox bbox;
  int class_id = 0;
  double score = 0;  // objectness * class probability

  friend bool operator==(const Detection&, const Detection&) = default;
};

/// Ground-truth or augmented label. weight < 1 marks a blended (MixUp) target.
struct LabeledBox {
  BBox box;
  int class_id = 0;
  double weight = 1.0;

  friend bool operator==(const LabeledBox&, const LabeledBox&) = default;
};

double intersection_area(const BBox& a, const BBox& b) noexcept;

/// Intersection over union; 0 when the union is empty.
double iou(const BBox& a, const BBox& b) noexcept;

/// IoU minus the empty fraction of the smallest enclosing box.
double giou(const BBox& a, const BBox& b) noexcept;

/// IoU minus squared center distance over squared enclosing diagonal.
double diou(const BBox& a, const BBox& b) noexcept;

/// DIoU minus the aspect-ratio penalty alpha * v. Throws DomainError when
/// either box has zero width or height.
double ciou(const BBox& a, const BBox& b);

}  // namespace yolo4
