#include "oracles.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

namespace yolo4::oracle {

namespace {

constexpr double kPi = 3.14159265358979323846;

double overlap_1d(double a0, double a1, double b0, double b1) {
  const double lo = a0 > b0 ? a0 : b0;
  const double hi = a1 < b1 ? a1 : b1;
  return hi > lo ? hi - lo : 0.0;
}

}  // namespace

Overlap overlap(const BBox& a, const BBox& b) {
  Overlap o;
  o.inter = overlap_1d(a.x1, a.x2, b.x1, b.x2) * overlap_1d(a.y1, a.y2, b.y1, b.y2);
  o.uni = (a.x2 - a.x1) * (a.y2 - a.y1) + (b.x2 - b.x1) * (b.y2 - b.y1) - o.inter;
  o.enclose_w = std::max(a.x2, b.x2) - std::min(a.x1, b.x1);
  o.enclose_h = std::max(a.y2, b.y2) - std::min(a.y1, b.y1);
  const double dx = (a.x1 + a.x2) / 2 - (b.x1 + b.x2) / 2;
  const double dy = (a.y1 + a.y2) / 2 - (b.y1 + b.y2) / 2;
  o.center_dist2 = dx * dx + dy * dy;
  return o;
}

double ref_iou(const BBox& a, const BBox& b) {
  const Overlap o = overlap(a, b);
  return o.uni > 0 ? o.inter / o.uni : 0.0;
}

double ref_giou(const BBox& a, const BBox& b) {
  const Overlap o = overlap(a, b);
  const double c = o.enclose_w * o.enclose_h;
  return ref_iou(a, b) - (c - o.uni) / c;
}

double ref_diou(const BBox& a, const BBox& b) {
  const Overlap o = overlap(a, b);
  const double c2 = o.enclose_w * o.enclose_w + o.enclose_h * o.enclose_h;
  return ref_iou(a, b) - o.center_dist2 / c2;
}

double ref_aspect_v(const BBox& a, const BBox& b) {
  const double d = std::atan((b.x2 - b.x1) / (b.y2 - b.y1)) - std::atan((a.x2 - a.x1) / (a.y2 - a.y1));
  return 4.0 / (kPi * kPi) * d * d;
}

double ref_ciou_alpha(const BBox& a, const BBox& b) {
  const double v = ref_aspect_v(a, b);
  if (v == 0) return 0.0;
  return v / (1.0 - ref_iou(a, b) + v);
}

double ref_ciou(const BBox& a, const BBox& b, std::optional<double> frozen_alpha) {
  const double alpha = frozen_alpha ? *frozen_alpha : ref_ciou_alpha(a, b);
  return ref_diou(a, b) - alpha * ref_aspect_v(a, b);
}

std::array<double, 4> fd_box_gradient(const BBox& pred, const BBox& target, int kind, double h) {
  const double alpha = ref_ciou_alpha(pred, target);
  auto loss = [&](const BBox& p) {
    switch (kind) {
      case 0: return 1.0 - ref_iou(p, target);
      case 1: return 1.0 - ref_giou(p, target);
      case 2: return 1.0 - ref_diou(p, target);
      default: return 1.0 - ref_ciou(p, target, alpha);
    }
  };
  std::array<double, 4> g{};
  for (int i = 0; i < 4; ++i) {
    BBox plus = pred;
    BBox minus = pred;
    double* pp[] = {&plus.x1, &plus.y1, &plus.x2, &plus.y2};
    double* mm[] = {&minus.x1, &minus.y1, &minus.x2, &minus.y2};
    *pp[i] += h;
    *mm[i] -= h;
    g[static_cast<std::size_t>(i)] = (loss(plus) - loss(minus)) / (2 * h);
  }
  return g;
}

std::vector<std::size_t> nms_exhaustive(std::span<const Detection> dets, double threshold,
                                        bool use_diou) {
  const std::size_t n = dets.size();
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    if (dets[a].score != dets[b].score) return dets[a].score > dets[b].score;
    if (dets[a].class_id != dets[b].class_id) return dets[a].class_id < dets[b].class_id;
    return a < b;
  });
  // pos[i] = visiting position of box i
  std::vector<std::size_t> pos(n);
  for (std::size_t k = 0; k < n; ++k) pos[order[k]] = k;

  auto suppresses = [&](std::size_t a, std::size_t b) {
    if (dets[a].class_id != dets[b].class_id || pos[a] >= pos[b]) return false;
    const double o = use_diou ? ref_diou(dets[a].bbox, dets[b].bbox) : ref_iou(dets[a].bbox, dets[b].bbox);
    return o > threshold;
  };

  std::vector<std::size_t> found;
  int solutions = 0;
  for (std::uint32_t mask = 0; mask < (1u << n); ++mask) {
    bool consistent = true;
    for (std::size_t b = 0; b < n && consistent; ++b) {
      bool hit = false;
      for (std::size_t a = 0; a < n; ++a) {
        if ((mask >> a & 1u) && suppresses(a, b)) hit = true;
      }
      const bool kept = mask >> b & 1u;
      if (kept == hit) consistent = false;
    }
    if (!consistent) continue;
    ++solutions;
    found.clear();
    for (std::size_t k = 0; k < n; ++k) {
      if (mask >> order[k] & 1u) found.push_back(order[k]);
    }
  }
  if (solutions != 1) return {n + 1};  // cannot happen for a strict order
  return found;
}

namespace {

// AP of one class, one threshold, one area bucket.
std::optional<double> reference_ap(std::span<const ImageDetection> dets,
                                   std::span<const ImageGroundTruth> gts, int cls, double thr,
                                   double area_lo, double area_hi, bool hi_inclusive) {
  auto in_bucket = [&](double area) {
    return area >= area_lo && (hi_inclusive ? area <= area_hi : area < area_hi);
  };
  int images = 0;
  for (const auto& d : dets) images = std::max(images, d.image + 1);
  for (const auto& g : gts) images = std::max(images, g.image + 1);

  struct Scored {
    double score;
    bool tp;
    int image;
  };
  std::vector<Scored> scored;
  int n_gt = 0;
  for (int img = 0; img < images; ++img) {
    std::vector<BBox> g_boxes;
    std::vector<bool> g_ignored;
    for (const auto& g : gts) {
      if (g.image != img || g.label.class_id != cls) continue;
      g_boxes.push_back(g.label.box);
      const double area = (g.label.box.x2 - g.label.box.x1) * (g.label.box.y2 - g.label.box.y1);
      g_ignored.push_back(!in_bucket(area));
      if (!g_ignored.back()) ++n_gt;
    }
    std::vector<Detection> d_list;
    for (const auto& d : dets) {
      if (d.image == img && d.det.class_id == cls) d_list.push_back(d.det);
    }
    std::sort(d_list.begin(), d_list.end(),
              [](const Detection& a, const Detection& b) { return a.score > b.score; });
    if (d_list.size() > 100) d_list.resize(100);

    std::vector<bool> used(g_boxes.size(), false);
    for (const Detection& d : d_list) {
      // Prefer the best unused non-ignored gt; fall back to ignored ones.
      int pick = -1;
      for (int pass = 0; pass < 2 && pick < 0; ++pass) {
        double best = -1;
        for (std::size_t g = 0; g < g_boxes.size(); ++g) {
          if (used[g] || g_ignored[g] != (pass == 1)) continue;
          const double o = ref_iou(d.bbox, g_boxes[g]);
          if (o >= thr && o > best) {
            best = o;
            pick = static_cast<int>(g);
          }
        }
      }
      if (pick >= 0) {
        used[static_cast<std::size_t>(pick)] = true;
        if (!g_ignored[static_cast<std::size_t>(pick)]) scored.push_back({d.score, true, img});
        continue;
      }
      const double area = (d.bbox.x2 - d.bbox.x1) * (d.bbox.y2 - d.bbox.y1);
      if (in_bucket(area)) scored.push_back({d.score, false, img});
    }
  }
  if (n_gt == 0) return std::nullopt;

  std::stable_sort(scored.begin(), scored.end(),
                   [](const Scored& a, const Scored& b) { return a.score > b.score; });
  std::vector<double> rec;
  std::vector<double> prec;
  double tp = 0;
  for (std::size_t i = 0; i < scored.size(); ++i) {
    if (scored[i].tp) tp += 1;
    rec.push_back(tp / n_gt);
    prec.push_back(tp / static_cast<double>(i + 1));
  }
  double sum = 0;
  for (int k = 0; k <= 100; ++k) {
    const double r = k * 0.01;
    double best = 0;
    for (std::size_t i = 0; i < rec.size(); ++i) {
      if (rec[i] >= r) best = std::max(best, prec[i]);
    }
    sum += best;
  }
  return sum / 101.0;
}

}  // namespace

RefEval reference_coco(std::span<const ImageDetection> dets,
                       std::span<const ImageGroundTruth> gts, int num_classes) {
  const double inf = std::numeric_limits<double>::infinity();
  struct Bucket {
    double lo, hi;
    bool hi_inclusive;
  };
  const Bucket all{0, inf, true};
  const Bucket small{0, 1024, false};
  const Bucket medium{1024, 9216, true};
  const Bucket large{std::nextafter(9216.0, inf), inf, true};

  auto mean_over = [&](const Bucket& b, std::vector<double> thresholds) -> std::optional<double> {
    double sum = 0;
    int count = 0;
    for (int c = 0; c < num_classes; ++c) {
      for (double t : thresholds) {
        const auto ap = reference_ap(dets, gts, c, t, b.lo, b.hi, b.hi_inclusive);
        if (ap) {
          sum += *ap;
          ++count;
        }
      }
    }
    if (count == 0) return std::nullopt;
    return sum / count;
  };
  const std::vector<double> ten{0.50, 0.55, 0.60, 0.65, 0.70, 0.75, 0.80, 0.85, 0.90, 0.95};

  RefEval r;
  r.ap = mean_over(all, ten);
  r.ap50 = mean_over(all, {0.50});
  r.ap75 = mean_over(all, {0.75});
  r.ap_s = mean_over(small, ten);
  r.ap_m = mean_over(medium, ten);
  r.ap_l = mean_over(large, ten);
  return r;
}

MicroDataset random_micro_dataset(RandomSource& rng, int max_images, int max_classes,
                                  int max_boxes) {
  MicroDataset ds;
  ds.num_classes = rng.uniform_int(1, max_classes);
  const int images = rng.uniform_int(1, max_images);
  // Extents chosen so all three area buckets occur.
  auto box = [&]() {
    const double w = rng.uniform(4, 160);
    const double h = rng.uniform(4, 160);
    const double x = rng.uniform(0, 200);
    const double y = rng.uniform(0, 200);
    return BBox{x, y, x + w, y + h};
  };
  for (int img = 0; img < images; ++img) {
    const int n_gt = rng.uniform_int(0, max_boxes);
    std::vector<LabeledBox> gt;
    for (int i = 0; i < n_gt; ++i) {
      gt.push_back({box(), rng.uniform_int(0, ds.num_classes - 1), 1.0});
      ds.gts.push_back({img, gt.back()});
    }
    const int n_det = rng.uniform_int(0, max_boxes);
    for (int i = 0; i < n_det; ++i) {
      Detection d;
      if (!gt.empty() && rng.bernoulli(0.6)) {
        const LabeledBox& src = gt[static_cast<std::size_t>(rng.uniform_int(0, n_gt - 1))];
        const double jw = 0.25 * src.box.width();
        const double jh = 0.25 * src.box.height();
        d.bbox = {src.box.x1 + rng.uniform(-jw, jw), src.box.y1 + rng.uniform(-jh, jh),
                  src.box.x2 + rng.uniform(-jw, jw), src.box.y2 + rng.uniform(-jh, jh)};
        if (d.bbox.x2 <= d.bbox.x1) std::swap(d.bbox.x1, d.bbox.x2);
        if (d.bbox.y2 <= d.bbox.y1) std::swap(d.bbox.y1, d.bbox.y2);
        d.class_id = rng.bernoulli(0.85) ? src.class_id : rng.uniform_int(0, ds.num_classes - 1);
      } else {
        d.bbox = box();
        d.class_id = rng.uniform_int(0, ds.num_classes - 1);
      }
      d.score = rng.uniform(0.01, 1.0);
      ds.dets.push_back({img, d});
    }
  }
  return ds;
}

}  // namespace yolo4::oracle
