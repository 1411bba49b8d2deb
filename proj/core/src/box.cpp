#include "yolo4/box.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "yolo4/error.hpp"

namespace yolo4 {

bool BBox::valid() const noexcept {
  return std::isfinite(x1) && std::isfinite(y1) && std::isfinite(x2) && std::isfinite(y2) &&
         x1 <= x2 && y1 <= y2;
}

double intersection_area(const BBox& a, const BBox& b) noexcept {
  const double w = std::min(a.x2, b.x2) - std::max(a.x1, b.x1);
  const double h = std::min(a.y2, b.y2) - std::max(a.y1, b.y1);
  return (w > 0 && h > 0) ? w * h : 0.0;
}

double iou(const BBox& a, const BBox& b) noexcept {
  const double inter = intersection_area(a, b);
  const double uni = a.area() + b.area() - inter;
  return uni > 0 ? inter / uni : 0.0;
}

double giou(const BBox& a, const BBox& b) noexcept {
  const double inter = intersection_area(a, b);
  const double uni = a.area() + b.area() - inter;
  const double enclose = (std::max(a.x2, b.x2) - std::min(a.x1, b.x1)) *
                         (std::max(a.y2, b.y2) - std::min(a.y1, b.y1));
  if (enclose <= 0) return uni > 0 ? inter / uni : 0.0;
  const double ratio = uni > 0 ? inter / uni : 0.0;
  return ratio - (enclose - uni) / enclose;
}

double diou(const BBox& a, const BBox& b) noexcept {
  const double cw = std::max(a.x2, b.x2) - std::min(a.x1, b.x1);
  const double ch = std::max(a.y2, b.y2) - std::min(a.y1, b.y1);
  const double diag2 = cw * cw + ch * ch;
  const double dx = a.cx() - b.cx();
  const double dy = a.cy() - b.cy();
  const double rho2 = dx * dx + dy * dy;
  return iou(a, b) - (diag2 > 0 ? rho2 / diag2 : 0.0);
}

double ciou(const BBox& a, const BBox& b) {
  if (!(a.width() > 0 && a.height() > 0 && b.width() > 0 && b.height() > 0)) {
    throw DomainError("ciou requires boxes with positive width and height");
  }
  const double overlap = iou(a, b);
  const double delta = std::atan(b.width() / b.height()) - std::atan(a.width() / a.height());
  const double v = 4.0 / (std::numbers::pi * std::numbers::pi) * delta * delta;
  const double denom = (1.0 - overlap) + v;
  const double alpha = (v > 0 && denom > 0) ? v / denom : 0.0;
  return diou(a, b) - alpha * v;
}

}  // namespace yolo4
