#pragma once

// Reference implementations written independently of the library, used as
// test oracles. They favour plain loops and brute force over speed.

#include <array>
#include <optional>
#include <span>
#include <vector>

#include "yolo4/box.hpp"
#include "yolo4/eval.hpp"
#include "yolo4/rng.hpp"

namespace yolo4::oracle {

struct Overlap {
  double inter = 0;
  double uni = 0;
  double enclose_w = 0;
  double enclose_h = 0;
  double center_dist2 = 0;
};

Overlap overlap(const BBox& a, const BBox& b);

double ref_iou(const BBox& a, const BBox& b);
double ref_giou(const BBox& a, const BBox& b);
double ref_diou(const BBox& a, const BBox& b);

/// Aspect term alpha * v with alpha supplied by the caller.
double ref_aspect_v(const BBox& a, const BBox& b);
double ref_ciou_alpha(const BBox& a, const BBox& b);
double ref_ciou(const BBox& a, const BBox& b, std::optional<double> frozen_alpha = std::nullopt);

/// Central finite differences of 1 - metric w.r.t. pred's corners. For ciou
/// alpha is frozen at the unperturbed pair.
std::array<double, 4> fd_box_gradient(const BBox& pred, const BBox& target, int kind, double h);

/// Brute force over all subsets: the unique set in which every box is kept
/// exactly when no earlier kept same-class box overlaps it beyond the
/// threshold. Earlier = higher score, then lower class, then lower index.
/// Returns kept indices in visiting order. Only for <= 16 boxes.
std::vector<std::size_t> nms_exhaustive(std::span<const Detection> dets, double threshold,
                                        bool use_diou);

/// Independent COCO-style evaluator for micro datasets.
struct RefEval {
  std::optional<double> ap, ap50, ap75, ap_s, ap_m, ap_l;
};
RefEval reference_coco(std::span<const ImageDetection> dets,
                       std::span<const ImageGroundTruth> gts, int num_classes);

/// Micro dataset: up to max_images images, max_classes classes and
/// max_boxes boxes per image on each side. Detections are noisy copies of
/// ground truth mixed with random boxes, with distinct scores.
struct MicroDataset {
  std::vector<ImageDetection> dets;
  std::vector<ImageGroundTruth> gts;
  int num_classes = 1;
};
MicroDataset random_micro_dataset(RandomSource& rng, int max_images, int max_classes,
                                  int max_boxes);

}  // namespace yolo4::oracle
