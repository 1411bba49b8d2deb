#include "yolo4/postprocess.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>

#include "yolo4/error.hpp"
#include "yolo4/ops.hpp"

namespace yolo4 {

std::pair<Tensor, LetterboxMeta> letterbox(const Tensor& image, int target) {
  if (image.empty() || image.w() < 1 || image.h() < 1) {
    throw DimensionError("h", "cannot letterbox an empty image");
  }
  if (target <= 0 || target % 32 != 0) {
    throw DimensionError("size", "letterbox target must be a positive multiple of 32");
  }
  LetterboxMeta meta;
  meta.src_w = image.w();
  meta.src_h = image.h();
  meta.scale = std::min(static_cast<double>(target) / image.w(),
                        static_cast<double>(target) / image.h());
  const int new_w = std::clamp(static_cast<int>(std::lround(image.w() * meta.scale)), 1, target);
  const int new_h = std::clamp(static_cast<int>(std::lround(image.h() * meta.scale)), 1, target);
  meta.pad_x = (target - new_w) / 2;
  meta.pad_y = (target - new_h) / 2;

  const Tensor resized = resize_bilinear(image, new_w, new_h);
  Tensor out(Shape{1, image.c(), target, target}, 0.5f);
  for (int ch = 0; ch < image.c(); ++ch) {
    const auto src = resized.plane(0, ch);
    auto dst = out.plane(0, ch);
    for (int y = 0; y < new_h; ++y) {
      std::copy_n(src.begin() + static_cast<std::ptrdiff_t>(y) * new_w, new_w,
                  dst.begin() + static_cast<std::ptrdiff_t>(y + meta.pad_y) * target + meta.pad_x);
    }
  }
  return {std::move(out), meta};
}

std::vector<Detection> unletterbox(std::span<const Detection> dets, const LetterboxMeta& meta) {
  std::vector<Detection> out(dets.begin(), dets.end());
  const double w = meta.src_w;
  const double h = meta.src_h;
  for (Detection& d : out) {
    BBox& b = d.bbox;
    b.x1 = std::clamp((b.x1 - meta.pad_x) / meta.scale, 0.0, w);
    b.x2 = std::clamp((b.x2 - meta.pad_x) / meta.scale, 0.0, w);
    b.y1 = std::clamp((b.y1 - meta.pad_y) / meta.scale, 0.0, h);
    b.y2 = std::clamp((b.y2 - meta.pad_y) / meta.scale, 0.0, h);
  }
  return out;
}

namespace {

double logistic(double v) {
  if (v >= 0) return 1.0 / (1.0 + std::exp(-v));
  const double e = std::exp(v);
  return e / (1.0 + e);
}

}  // namespace

std::vector<Detection> decode_head(const Tensor& raw, int batch_index, int num_classes,
                                   std::span<const AnchorBox> anchors, int stride,
                                   double conf_threshold) {
  const int per_anchor = 5 + num_classes;
  const int n_anchors = static_cast<int>(anchors.size());
  if (num_classes < 1 || raw.c() != n_anchors * per_anchor) {
    throw DimensionError("c", "head tensor has " + std::to_string(raw.c()) +
                                  " channels, expected " +
                                  std::to_string(n_anchors * per_anchor));
  }
  if (batch_index < 0 || batch_index >= raw.n()) {
    throw DimensionError("n", "batch index out of range");
  }
  std::vector<Detection> out;
  if (conf_threshold > 1.0) return out;
  const int gh = raw.h();
  const int gw = raw.w();
  std::vector<double> cls(static_cast<std::size_t>(num_classes));
  for (int a = 0; a < n_anchors; ++a) {
    const int base = a * per_anchor;
    for (int cy = 0; cy < gh; ++cy) {
      for (int cx = 0; cx < gw; ++cx) {
        const double objectness = logistic(raw.at(batch_index, base + 4, cy, cx));
        if (objectness < conf_threshold) continue;  // score <= objectness
        const double tx = raw.at(batch_index, base + 0, cy, cx);
        const double ty = raw.at(batch_index, base + 1, cy, cx);
        const double tw = std::min<double>(raw.at(batch_index, base + 2, cy, cx), kMaxSizeLogit);
        const double th = std::min<double>(raw.at(batch_index, base + 3, cy, cx), kMaxSizeLogit);
        const double center_x = (logistic(tx) + cx) * stride;
        const double center_y = (logistic(ty) + cy) * stride;
        const double w = anchors[a].width * std::exp(tw);
        const double h = anchors[a].height * std::exp(th);
        const BBox box = BBox::from_center(center_x, center_y, w, h);
        for (int k = 0; k < num_classes; ++k) {
          const double score = objectness * logistic(raw.at(batch_index, base + 5 + k, cy, cx));
          if (score >= conf_threshold) out.push_back({box, k, score});
        }
      }
    }
  }
  return out;
}

std::vector<Detection> nms(std::span<const Detection> dets, double iou_threshold,
                           NmsCriterion criterion) {
  std::vector<std::size_t> order(dets.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    if (dets[a].score != dets[b].score) return dets[a].score > dets[b].score;
    return dets[a].class_id < dets[b].class_id;
  });
  std::vector<Detection> kept;
  kept.reserve(order.size());
  // Both criteria are bounded by 1, so nothing can exceed such a threshold.
  if (iou_threshold >= 1.0) {
    for (std::size_t idx : order) kept.push_back(dets[idx]);
    return kept;
  }
  // Suppression never crosses classes, so each class runs on its own list;
  // survivors are merged back by their global visiting rank.
  std::map<int, std::vector<std::size_t>> by_class;  // class -> ranks
  for (std::size_t r = 0; r < order.size(); ++r) by_class[dets[order[r]].class_id].push_back(r);
  std::vector<std::size_t> kept_ranks;
  std::vector<bool> suppressed;
  for (const auto& [cls, ranks] : by_class) {
    suppressed.assign(ranks.size(), false);
    for (std::size_t i = 0; i < ranks.size(); ++i) {
      if (suppressed[i]) continue;
      kept_ranks.push_back(ranks[i]);
      const BBox& head = dets[order[ranks[i]]].bbox;
      for (std::size_t j = i + 1; j < ranks.size(); ++j) {
        if (suppressed[j]) continue;
        const BBox& other = dets[order[ranks[j]]].bbox;
        const double overlap =
            criterion == NmsCriterion::iou ? iou(head, other) : diou(head, other);
        if (overlap > iou_threshold) suppressed[j] = true;
      }
    }
  }
  std::sort(kept_ranks.begin(), kept_ranks.end());
  for (std::size_t r : kept_ranks) kept.push_back(dets[order[r]]);
  return kept;
}

std::vector<Detection> postprocess(std::span<const Tensor> raw_heads, int batch_index,
                                   const HeadConfig& head, const LetterboxMeta& meta,
                                   const PostprocessOptions& options) {
  if (raw_heads.size() != 3) throw DimensionError("heads", "expected 3 head tensors");
  std::vector<Detection> all;
  for (std::size_t s = 0; s < 3; ++s) {
    auto dets = decode_head(raw_heads[s], batch_index, head.num_classes, head.anchors[s],
                            head.strides[s], options.conf_threshold);
    all.insert(all.end(), dets.begin(), dets.end());
  }
  const auto kept = nms(all, options.nms_threshold, options.criterion);
  return unletterbox(kept, meta);
}

}  // namespace yolo4
