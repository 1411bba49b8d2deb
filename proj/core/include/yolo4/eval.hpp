#pragma once

#include <array>
#include <optional>
#include <span>
#include <vector>

#include "yolo4/box.hpp"

namespace yolo4 {

/// Greedy matching within one image. `dets` must be sorted by descending
/// score; only equal class ids are compared. Each detection takes the
/// unmatched ground truth with the highest IoU >= iou_threshold (ties go to
/// the lower ground-truth index). Returns one TP flag per detection.
std::vector<bool> match_detections(std::span<const Detection> dets,
                                   std::span<const LabeledBox> gts, double iou_threshold);

struct ScoredMatch {
  double score = 0;
  bool true_positive = false;
};

/// Recall points 0.00, 0.01, ..., 1.00 used for interpolation.
inline constexpr int kRecallPoints = 101;

/// 101-point interpolated AP over matches sorted by descending score
/// (stable). Absent (nullopt) when n_gt == 0.
std::optional<double> average_precision(std::span<const ScoredMatch> matches, int n_gt);

struct ImageDetection {
  int image = 0;
  Detection det;
};

struct ImageGroundTruth {
  int image = 0;
  LabeledBox label;
};

/// Ground-truth area buckets in source pixels:
/// small < 32^2 <= medium <= 96^2 < large.
enum class AreaRange { all, small, medium, large };
inline constexpr double kSmallAreaLimit = 32.0 * 32.0;
inline constexpr double kLargeAreaLimit = 96.0 * 96.0;
bool in_area_range(double area, AreaRange range) noexcept;

inline constexpr std::array<double, 10> kIouThresholds{0.50, 0.55, 0.60, 0.65, 0.70,
                                                       0.75, 0.80, 0.85, 0.90, 0.95};

struct EvalOptions {
  /// Highest-scoring detections kept per (image, class).
  int max_dets = 100;
};

struct ClassAp {
  int class_id = 0;
  int num_gt = 0;
  std::optional<double> ap;
  std::optional<double> ap50;
  std::optional<double> ap75;
};

/// Absent fields mean no class had ground truth in the relevant bucket.
struct EvalResult {
  std::optional<double> ap;
  std::optional<double> ap50;
  std::optional<double> ap75;
  std::optional<double> ap_s;
  std::optional<double> ap_m;
  std::optional<double> ap_l;
  std::vector<ClassAp> per_class;
};

/// AP of one class at one IoU threshold restricted to an area bucket.
/// Ground truths outside the bucket are ignored: detections matched to them
/// and unmatched detections outside the bucket do not count.
std::optional<double> class_ap(std::span<const ImageDetection> dets,
                               std::span<const ImageGroundTruth> gts, int class_id,
                               double iou_threshold, AreaRange range,
                               const EvalOptions& opts = {});

/// COCO-style summary: means over classes with ground truth and over the
/// ten thresholds 0.50:0.05:0.95. Input order does not matter.
EvalResult coco_ap(std::span<const ImageDetection> dets, std::span<const ImageGroundTruth> gts,
                   int num_classes, const EvalOptions& opts = {});

}  // namespace yolo4
