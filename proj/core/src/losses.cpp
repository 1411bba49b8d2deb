#include "yolo4/losses.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numbers>
#include <tuple>

#include "yolo4/error.hpp"

namespace yolo4 {

namespace {

using Grad = std::array<double, 4>;

Grad scaled(const Grad& g, double s) { return {g[0] * s, g[1] * s, g[2] * s, g[3] * s}; }

Grad combine(const Grad& a, double sa, const Grad& b, double sb) {
  return {a[0] * sa + b[0] * sb, a[1] * sa + b[1] * sb, a[2] * sa + b[2] * sb,
          a[3] * sa + b[3] * sb};
}

// Overlap and enclosure quantities with partial derivatives w.r.t. the
// predicted box (x1, y1, x2, y2).
struct BoxTerms {
  double area_a, area_b, inter, uni, iou;
  double enc_w, enc_h;
  Grad d_area, d_inter, d_uni, d_iou, d_enc_w, d_enc_h;
};

BoxTerms box_terms(const BBox& a, const BBox& b) {
  BoxTerms t{};
  const double wa = a.width();
  const double ha = a.height();
  t.area_a = wa * ha;
  t.area_b = b.area();
  t.d_area = {-ha, -wa, ha, wa};

  const bool a_left = a.x1 >= b.x1;   // a supplies the intersection's left edge
  const bool a_right = a.x2 <= b.x2;
  const bool a_top = a.y1 >= b.y1;
  const bool a_bottom = a.y2 <= b.y2;
  const double iw = std::min(a.x2, b.x2) - std::max(a.x1, b.x1);
  const double ih = std::min(a.y2, b.y2) - std::max(a.y1, b.y1);
  if (iw >= 0 && ih >= 0) {
    t.inter = iw * ih;
    t.d_inter = {a_left ? -ih : 0.0, a_top ? -iw : 0.0, a_right ? ih : 0.0, a_bottom ? iw : 0.0};
  }
  t.uni = t.area_a + t.area_b - t.inter;
  for (int i = 0; i < 4; ++i) t.d_uni[i] = t.d_area[i] - t.d_inter[i];
  if (t.uni > 0) {
    t.iou = t.inter / t.uni;
    for (int i = 0; i < 4; ++i) {
      t.d_iou[i] = (t.d_inter[i] * t.uni - t.inter * t.d_uni[i]) / (t.uni * t.uni);
    }
  }

  t.enc_w = std::max(a.x2, b.x2) - std::min(a.x1, b.x1);
  t.enc_h = std::max(a.y2, b.y2) - std::min(a.y1, b.y1);
  t.d_enc_w = {a.x1 <= b.x1 ? -1.0 : 0.0, 0.0, a.x2 >= b.x2 ? 1.0 : 0.0, 0.0};
  t.d_enc_h = {0.0, a.y1 <= b.y1 ? -1.0 : 0.0, 0.0, a.y2 >= b.y2 ? 1.0 : 0.0};
  return t;
}

// ρ²/c² and its gradient.
std::pair<double, Grad> center_penalty(const BBox& a, const BBox& b, const BoxTerms& t) {
  const double c2 = t.enc_w * t.enc_w + t.enc_h * t.enc_h;
  if (c2 <= 0) return {0.0, {}};
  const double dx = a.cx() - b.cx();
  const double dy = a.cy() - b.cy();
  const double rho2 = dx * dx + dy * dy;
  const Grad d_rho2{dx, dy, dx, dy};
  const Grad d_c2 = combine(t.d_enc_w, 2 * t.enc_w, t.d_enc_h, 2 * t.enc_h);
  Grad g{};
  for (int i = 0; i < 4; ++i) g[i] = (d_rho2[i] * c2 - rho2 * d_c2[i]) / (c2 * c2);
  return {rho2 / c2, g};
}

}  // namespace

LossValue box_loss(const BBox& pred, const BBox& target, BoxLossKind kind) {
  const BoxTerms t = box_terms(pred, target);
  double metric = t.iou;
  Grad d_metric = t.d_iou;

  switch (kind) {
    case BoxLossKind::iou:
      break;
    case BoxLossKind::giou: {
      const double enclose = t.enc_w * t.enc_h;
      if (enclose > 0) {
        metric = t.iou - 1.0 + t.uni / enclose;
        const Grad d_enclose = combine(t.d_enc_w, t.enc_h, t.d_enc_h, t.enc_w);
        for (int i = 0; i < 4; ++i) {
          d_metric[i] = t.d_iou[i] + (t.d_uni[i] * enclose - t.uni * d_enclose[i]) /
                                         (enclose * enclose);
        }
      }
      break;
    }
    case BoxLossKind::diou:
    case BoxLossKind::ciou: {
      const auto [penalty, d_penalty] = center_penalty(pred, target, t);
      metric = t.iou - penalty;
      d_metric = combine(t.d_iou, 1.0, d_penalty, -1.0);
      if (kind == BoxLossKind::diou) break;

      const double wa = pred.width();
      const double ha = pred.height();
      if (!(wa > 0 && ha > 0 && target.width() > 0 && target.height() > 0)) {
        throw DomainError("ciou loss requires boxes with positive width and height");
      }
      constexpr double k = 4.0 / (std::numbers::pi * std::numbers::pi);
      const double delta = std::atan(target.width() / target.height()) - std::atan(wa / ha);
      const double v = k * delta * delta;
      const double denom = (1.0 - t.iou) + v;
      const double alpha = (v > 0 && denom > 0) ? v / denom : 0.0;
      metric -= alpha * v;
      const double r2 = wa * wa + ha * ha;
      const double dv_dw = -2.0 * k * delta * ha / r2;
      const double dv_dh = 2.0 * k * delta * wa / r2;
      const Grad d_v{-dv_dw, -dv_dh, dv_dw, dv_dh};
      d_metric = combine(d_metric, 1.0, d_v, -alpha);
      break;
    }
  }
  return {1.0 - metric, scaled(d_metric, -1.0)};
}

double binary_cross_entropy(double p, double target) {
  const double q = std::clamp(p, kProbEpsilon, 1.0 - kProbEpsilon);
  return -(target * std::log(q) + (1.0 - target) * std::log(1.0 - q));
}

double focal_loss(double p, int y, double alpha, double gamma) {
  const double q = std::clamp(p, kProbEpsilon, 1.0 - kProbEpsilon);
  const double pt = y == 1 ? q : 1.0 - q;
  return -alpha * std::pow(1.0 - pt, gamma) * std::log(pt);
}

std::vector<double> label_smooth(std::span<const double> onehot, double epsilon) {
  if (!(epsilon >= 0.0 && epsilon < 1.0)) {
    throw DomainError("label smoothing epsilon must lie in [0, 1)");
  }
  std::vector<double> out(onehot.begin(), onehot.end());
  const double k = static_cast<double>(out.size());
  for (double& v : out) v = v * (1.0 - epsilon) + epsilon / k;
  return out;
}

int best_anchor(const HeadConfig& head, double w, double h) {
  int best = 0;
  double best_iou = -1.0;
  for (int s = 0; s < 3; ++s) {
    for (int a = 0; a < 3; ++a) {
      const double aw = head.anchors[s][a].width;
      const double ah = head.anchors[s][a].height;
      const double inter = std::min(w, aw) * std::min(h, ah);
      const double overlap = inter / (w * h + aw * ah - inter);
      if (overlap > best_iou) {
        best_iou = overlap;
        best = s * 3 + a;
      }
    }
  }
  return best;
}

namespace {

double logistic(double v) {
  if (v >= 0) return 1.0 / (1.0 + std::exp(-v));
  const double e = std::exp(v);
  return e / (1.0 + e);
}

}  // namespace

DetectionLossBreakdown detection_loss(std::span<const Tensor> raw, std::span<const TargetBox> targets,
                                      const HeadConfig& head, const LossWeights& weights,
                                      const ClassLossOptions& cls_options) {
  if (raw.size() != 3) throw DimensionError("heads", "expected 3 head tensors");
  const int per_anchor = 5 + head.num_classes;
  for (const Tensor& t : raw) {
    if (t.c() != 3 * per_anchor) throw DimensionError("c", "head channel mismatch");
    if (t.n() != raw[0].n()) throw DimensionError("n", "heads disagree on batch extent");
  }
  const int batch = raw[0].n();
  const double image_w = static_cast<double>(raw[0].w()) * head.strides[0];
  const double image_h = static_cast<double>(raw[0].h()) * head.strides[0];

  std::vector<double> onehot(static_cast<std::size_t>(head.num_classes));
  // (scale, image, anchor, gy, gx) -> objectness target
  std::map<std::tuple<int, int, int, int, int>, double> positives;
  DetectionLossBreakdown out;
  double weight_sum = 0;

  for (const TargetBox& target : targets) {
    const BBox& gt = target.label.box;
    if (target.image < 0 || target.image >= batch) {
      throw DomainError("target image index out of range");
    }
    if (!(gt.x1 >= 0 && gt.y1 >= 0 && gt.x2 <= image_w && gt.y2 <= image_h &&
          gt.width() > 0 && gt.height() > 0)) {
      throw DomainError("ground-truth box lies outside the image or is degenerate");
    }
    if (target.label.class_id < 0 || target.label.class_id >= head.num_classes) {
      throw DomainError("ground-truth class id out of range");
    }
    const int idx = best_anchor(head, gt.width(), gt.height());
    const int s = idx / 3;
    const int a = idx % 3;
    const Tensor& t = raw[s];
    const int stride = head.strides[s];
    const int gx = std::clamp(static_cast<int>(std::floor(gt.cx() / stride)), 0, t.w() - 1);
    const int gy = std::clamp(static_cast<int>(std::floor(gt.cy() / stride)), 0, t.h() - 1);
    const int base = a * per_anchor;
    auto logit = [&](int k) { return static_cast<double>(t.at(target.image, base + k, gy, gx)); };

    const BBox pred = BBox::from_center(
        (logistic(logit(0)) + gx) * stride, (logistic(logit(1)) + gy) * stride,
        head.anchors[s][a].width * std::exp(std::min(logit(2), 10.0)),
        head.anchors[s][a].height * std::exp(std::min(logit(3), 10.0)));
    const double w = target.label.weight;
    out.box += w * box_loss(pred, gt, BoxLossKind::ciou).value;

    std::fill(onehot.begin(), onehot.end(), 0.0);
    onehot[static_cast<std::size_t>(target.label.class_id)] = 1.0;
    const auto soft = label_smooth(onehot, cls_options.label_smoothing);
    double cls = 0;
    for (int k = 0; k < head.num_classes; ++k) {
      const double p = logistic(logit(5 + k));
      cls += cls_options.focal
                 ? focal_loss(p, onehot[k] > 0.5 ? 1 : 0, cls_options.focal_alpha,
                              cls_options.focal_gamma)
                 : binary_cross_entropy(p, soft[k]);
    }
    out.cls += w * cls;
    weight_sum += w;
    ++out.assigned;
    auto& obj = positives[{s, target.image, a, gy, gx}];
    obj = std::max(obj, std::min(w, 1.0));
  }
  if (weight_sum > 0) {
    out.box /= weight_sum;
    out.cls /= weight_sum;
  }

  double obj_sum = 0;
  std::size_t cells = 0;
  for (int s = 0; s < 3; ++s) {
    const Tensor& t = raw[s];
    for (int b = 0; b < batch; ++b) {
      for (int a = 0; a < 3; ++a) {
        for (int gy = 0; gy < t.h(); ++gy) {
          for (int gx = 0; gx < t.w(); ++gx) {
            const auto it = positives.find({s, b, a, gy, gx});
            const double target = it == positives.end() ? 0.0 : it->second;
            obj_sum += binary_cross_entropy(logistic(t.at(b, a * per_anchor + 4, gy, gx)), target);
            ++cells;
          }
        }
      }
    }
  }
  out.obj = cells ? obj_sum / static_cast<double>(cells) : 0.0;
  out.total = weights.box * out.box + weights.obj * out.obj + weights.cls * out.cls;
  return out;
}

}  // namespace yolo4
