#pragma once

#include <array>
#include <span>
#include <vector>

#include "yolo4/box.hpp"
#include "yolo4/network.hpp"
#include "yolo4/tensor.hpp"

namespace yolo4 {

enum class BoxLossKind { iou, giou, diou, ciou };

/// Loss value with its gradient with respect to the predicted box's
/// (x1, y1, x2, y2).
struct LossValue {
  double value = 0;
  std::array<double, 4> gradient{};
};

/// 1 - metric(pred, target) with an analytic gradient.
///
/// Subgradient conventions:
///  - min/max ties resolve to the predicted box's coordinate;
///  - at zero overlap along an axis (touching edges) the derivative is the
///    one-sided limit from the overlapping side;
///  - for ciou the trade-off weight alpha is held constant.
LossValue box_loss(const BBox& pred, const BBox& target, BoxLossKind kind);

/// All probabilities are clamped to [kProbEpsilon, 1 - kProbEpsilon] before
/// taking logarithms.
inline constexpr double kProbEpsilon = 1e-7;

/// -(t log p + (1 - t) log(1 - p)) for a (possibly soft) target t.
double binary_cross_entropy(double p, double target);

/// -alpha * (1 - p_t)^gamma * log(p_t), p_t = p when y = 1, else 1 - p.
double focal_loss(double p, int y, double alpha, double gamma);

/// y * (1 - epsilon) + epsilon / K. Throws DomainError unless 0 <= epsilon < 1.
std::vector<double> label_smooth(std::span<const double> onehot, double epsilon);

struct LossWeights {
  double box = 1.0;
  double obj = 1.0;
  double cls = 1.0;
};

struct ClassLossOptions {
  double label_smoothing = 0.0;
  bool focal = false;
  double focal_alpha = 0.25;
  double focal_gamma = 2.0;
};

/// Ground-truth box for image `image` of a batch, in input-image pixels.
struct TargetBox {
  int image = 0;
  LabeledBox label;
};

struct DetectionLossBreakdown {
  double box = 0;
  double obj = 0;
  double cls = 0;
  double total = 0;
  int assigned = 0;
};

/// Index (scale * 3 + anchor) of the anchor whose shape best overlaps a
/// w x h target when both are centered; ties go to the lower index.
int best_anchor(const HeadConfig& head, double w, double h);

/// Composite detection loss over raw head tensors (finest scale first).
///  box: weighted mean of CIoU loss over assigned targets;
///  obj: mean BCE over every (image, anchor, cell) of every scale;
///  cls: weighted mean over assigned targets of the per-class BCE (or focal)
///       sum, against optionally smoothed one-hot targets.
DetectionLossBreakdown detection_loss(std::span<const Tensor> raw_heads,
                                      std::span<const TargetBox> targets, const HeadConfig& head,
                                      const LossWeights& weights = {},
                                      const ClassLossOptions& cls_options = {});

}  // namespace yolo4
