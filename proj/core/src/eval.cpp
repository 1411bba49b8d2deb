#include "yolo4/eval.hpp"

#include <algorithm>
#include <map>
#include <tuple>

#include "yolo4/parallel.hpp"

namespace yolo4 {

std::vector<bool> match_detections(std::span<const Detection> dets,
                                   std::span<const LabeledBox> gts, double iou_threshold) {
  std::vector<bool> tp(dets.size(), false);
  std::vector<bool> taken(gts.size(), false);
  for (std::size_t d = 0; d < dets.size(); ++d) {
    int best = -1;
    double best_iou = -1.0;
    for (std::size_t g = 0; g < gts.size(); ++g) {
      if (taken[g] || gts[g].class_id != dets[d].class_id) continue;
      const double o = iou(dets[d].bbox, gts[g].box);
      if (o >= iou_threshold && o > best_iou) {
        best_iou = o;
        best = static_cast<int>(g);
      }
    }
    if (best >= 0) {
      taken[static_cast<std::size_t>(best)] = true;
      tp[d] = true;
    }
  }
  return tp;
}

std::optional<double> average_precision(std::span<const ScoredMatch> matches, int n_gt) {
  if (n_gt <= 0) return std::nullopt;
  std::vector<ScoredMatch> sorted(matches.begin(), matches.end());
  std::stable_sort(sorted.begin(), sorted.end(),
                   [](const ScoredMatch& a, const ScoredMatch& b) { return a.score > b.score; });

  std::vector<double> recall(sorted.size());
  std::vector<double> precision(sorted.size());
  double tp = 0;
  double fp = 0;
  for (std::size_t i = 0; i < sorted.size(); ++i) {
    (sorted[i].true_positive ? tp : fp) += 1;
    recall[i] = tp / n_gt;
    precision[i] = tp / (tp + fp);
  }
  for (std::size_t i = precision.size(); i-- > 1;) {
    precision[i - 1] = std::max(precision[i - 1], precision[i]);
  }
  double sum = 0;
  for (int k = 0; k < kRecallPoints; ++k) {
    const double t = k * 0.01;
    const auto it = std::lower_bound(recall.begin(), recall.end(), t);
    if (it != recall.end()) sum += precision[static_cast<std::size_t>(it - recall.begin())];
  }
  return sum / kRecallPoints;
}

bool in_area_range(double area, AreaRange range) noexcept {
  switch (range) {
    case AreaRange::all: return true;
    case AreaRange::small: return area < kSmallAreaLimit;
    case AreaRange::medium: return area >= kSmallAreaLimit && area <= kLargeAreaLimit;
    case AreaRange::large: return area > kLargeAreaLimit;
  }
  return false;
}

namespace {

struct ImageEntry {
  std::vector<Detection> dets;  // score-sorted, capped
  std::vector<BBox> gts;
};

// image id -> entry, for one class. std::map keeps image order fixed.
using ClassIndex = std::map<int, ImageEntry>;

bool det_before(const Detection& a, const Detection& b) {
  if (a.score != b.score) return a.score > b.score;
  return std::tie(a.bbox.x1, a.bbox.y1, a.bbox.x2, a.bbox.y2) <
         std::tie(b.bbox.x1, b.bbox.y1, b.bbox.x2, b.bbox.y2);
}

std::vector<ClassIndex> build_index(std::span<const ImageDetection> dets,
                                    std::span<const ImageGroundTruth> gts, int num_classes,
                                    const EvalOptions& opts) {
  std::vector<ClassIndex> index(static_cast<std::size_t>(std::max(num_classes, 0)));
  auto valid = [&](int c) { return c >= 0 && c < num_classes; };
  for (const ImageDetection& d : dets) {
    if (valid(d.det.class_id)) index[static_cast<std::size_t>(d.det.class_id)][d.image].dets.push_back(d.det);
  }
  for (const ImageGroundTruth& g : gts) {
    if (valid(g.label.class_id)) index[static_cast<std::size_t>(g.label.class_id)][g.image].gts.push_back(g.label.box);
  }
  const std::size_t cap = static_cast<std::size_t>(std::max(opts.max_dets, 0));
  for (ClassIndex& ci : index) {
    for (auto& [image, entry] : ci) {
      std::stable_sort(entry.dets.begin(), entry.dets.end(), det_before);
      if (entry.dets.size() > cap) entry.dets.resize(cap);
    }
  }
  return index;
}

std::optional<double> ap_for(const ClassIndex& ci, double threshold, AreaRange range) {
  std::vector<ScoredMatch> matches;
  int n_gt = 0;
  for (const auto& [image, entry] : ci) {
    // Non-ignored ground truths first so they win matches.
    std::vector<std::size_t> order(entry.gts.size());
    std::vector<bool> ignored(entry.gts.size());
    for (std::size_t g = 0; g < entry.gts.size(); ++g) {
      order[g] = g;
      ignored[g] = !in_area_range(entry.gts[g].area(), range);
      if (!ignored[g]) ++n_gt;
    }
    std::stable_partition(order.begin(), order.end(), [&](std::size_t g) { return !ignored[g]; });

    std::vector<bool> taken(entry.gts.size(), false);
    for (const Detection& d : entry.dets) {
      int best = -1;
      double best_iou = -1.0;
      for (std::size_t g : order) {
        if (taken[g]) continue;
        if (best >= 0 && !ignored[static_cast<std::size_t>(best)] && ignored[g]) break;
        const double o = iou(d.bbox, entry.gts[g]);
        if (o >= threshold && o > best_iou) {
          best_iou = o;
          best = static_cast<int>(g);
        }
      }
      if (best >= 0) {
        taken[static_cast<std::size_t>(best)] = true;
        if (!ignored[static_cast<std::size_t>(best)]) matches.push_back({d.score, true});
      } else if (in_area_range(d.bbox.area(), range)) {
        matches.push_back({d.score, false});
      }
    }
  }
  return average_precision(matches, n_gt);
}

std::optional<double> mean_present(std::span<const std::optional<double>> xs) {
  double sum = 0;
  int count = 0;
  for (const auto& x : xs) {
    if (x) {
      sum += *x;
      ++count;
    }
  }
  if (count == 0) return std::nullopt;
  return sum / count;
}

}  // namespace

std::optional<double> class_ap(std::span<const ImageDetection> dets,
                               std::span<const ImageGroundTruth> gts, int class_id,
                               double iou_threshold, AreaRange range, const EvalOptions& opts) {
  if (class_id < 0) return std::nullopt;
  const auto index = build_index(dets, gts, class_id + 1, opts);
  return ap_for(index[static_cast<std::size_t>(class_id)], iou_threshold, range);
}

EvalResult coco_ap(std::span<const ImageDetection> dets, std::span<const ImageGroundTruth> gts,
                   int num_classes, const EvalOptions& opts) {
  const auto index = build_index(dets, gts, num_classes, opts);
  constexpr std::size_t kT = kIouThresholds.size();
  constexpr AreaRange kRanges[] = {AreaRange::all, AreaRange::small, AreaRange::medium,
                                   AreaRange::large};
  // [class][range][threshold]
  std::vector<std::array<std::array<std::optional<double>, kT>, 4>> table(index.size());
  parallel_for(index.size(), [&](std::size_t c) {
    for (std::size_t r = 0; r < 4; ++r) {
      for (std::size_t t = 0; t < kT; ++t) table[c][r][t] = ap_for(index[c], kIouThresholds[t], kRanges[r]);
    }
  });

  auto summarize = [&](std::size_t r, std::optional<std::size_t> t) {
    std::vector<std::optional<double>> vals;
    for (std::size_t c = 0; c < table.size(); ++c) {
      if (t) {
        vals.push_back(table[c][r][*t]);
      } else {
        vals.insert(vals.end(), table[c][r].begin(), table[c][r].end());
      }
    }
    return mean_present(vals);
  };

  EvalResult res;
  res.ap = summarize(0, std::nullopt);
  res.ap50 = summarize(0, 0);
  res.ap75 = summarize(0, 5);
  res.ap_s = summarize(1, std::nullopt);
  res.ap_m = summarize(2, std::nullopt);
  res.ap_l = summarize(3, std::nullopt);
  for (std::size_t c = 0; c < table.size(); ++c) {
    ClassAp ca;
    ca.class_id = static_cast<int>(c);
    for (const auto& [image, entry] : index[c]) ca.num_gt += static_cast<int>(entry.gts.size());
    ca.ap = mean_present(table[c][0]);
    ca.ap50 = table[c][0][0];
    ca.ap75 = table[c][0][5];
    res.per_class.push_back(ca);
  }
  return res;
}

}  // namespace yolo4
