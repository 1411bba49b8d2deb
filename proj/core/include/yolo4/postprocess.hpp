#pragma once

#include <span>
#include <utility>
#include <vector>

#include "yolo4/box.hpp"
#include "yolo4/model_config.hpp"
#include "yolo4/network.hpp"
#include "yolo4/tensor.hpp"

namespace yolo4 {

/// Mapping from source pixels to the letterboxed square:
/// target = source * scale + pad.
struct LetterboxMeta {
  double scale = 1.0;
  int pad_x = 0;
  int pad_y = 0;
  int src_w = 0;
  int src_h = 0;
};

/// Aspect-preserving bilinear resize of a (1, 3, H, W) image onto a centered
/// S x S canvas filled with 0.5.
std::pair<Tensor, LetterboxMeta> letterbox(const Tensor& image, int target);

/// Maps letterboxed detections back to source pixels and clamps them to the
/// source image.
std::vector<Detection> unletterbox(std::span<const Detection> dets, const LetterboxMeta& meta);

/// Decodes one head tensor for batch item `batch_index`. Emits one detection
/// per (cell, anchor, class) whose objectness * class probability reaches
/// conf_threshold. Coordinates are in letterboxed pixels.
std::vector<Detection> decode_head(const Tensor& raw, int batch_index, int num_classes,
                                   std::span<const AnchorBox> anchors, int stride,
                                   double conf_threshold);

/// Box-size logits are clamped to this value before exponentiation.
inline constexpr double kMaxSizeLogit = 10.0;

enum class NmsCriterion { iou, diou };

/// Per-class greedy suppression. Candidates are visited by descending score,
/// then ascending class id, then input position; a candidate is dropped when
/// its criterion against an already kept same-class box exceeds
/// iou_threshold. Survivors come back in visiting order.
std::vector<Detection> nms(std::span<const Detection> dets, double iou_threshold,
                           NmsCriterion criterion = NmsCriterion::iou);

struct PostprocessOptions {
  double conf_threshold = 0.25;
  double nms_threshold = 0.45;
  NmsCriterion criterion = NmsCriterion::iou;
};

/// decode_head over all scales, nms, then unletterbox.
std::vector<Detection> postprocess(std::span<const Tensor> raw_heads, int batch_index,
                                   const HeadConfig& head, const LetterboxMeta& meta,
                                   const PostprocessOptions& options);

}  // namespace yolo4
