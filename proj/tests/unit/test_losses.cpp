#include <cmath>

#include "doctest.h"
#include "oracles.hpp"
#include "support.hpp"
#include "yolo4/error.hpp"
#include "yolo4/losses.hpp"

using namespace yolo4;

namespace {

constexpr BoxLossKind kKinds[] = {BoxLossKind::iou, BoxLossKind::giou, BoxLossKind::diou,
                                  BoxLossKind::ciou};

// Pairs that overlap most of the time, with corners far from each other.
std::pair<BBox, BBox> overlapping_pair(RandomSource& rng) {
  const BBox t = test::random_box(rng, 60, 8);
  BBox p = t;
  p.x1 += rng.uniform(-6, 6);
  p.y1 += rng.uniform(-6, 6);
  p.x2 += rng.uniform(-6, 6);
  p.y2 += rng.uniform(-6, 6);
  if (p.x2 - p.x1 < 1) p.x2 = p.x1 + 1;
  if (p.y2 - p.y1 < 1) p.y2 = p.y1 + 1;
  return {p, t};
}

double logit(double p) { return std::log(p / (1 - p)); }

}  // namespace

TEST_CASE("box_loss values are one minus the reference metric") {
  RandomSource rng(21);
  for (int i = 0; i < 1000; ++i) {
    const BBox p = test::random_box(rng);
    const BBox t = test::random_box(rng);
    CHECK(box_loss(p, t, BoxLossKind::iou).value == doctest::Approx(1 - oracle::ref_iou(p, t)));
    CHECK(box_loss(p, t, BoxLossKind::giou).value == doctest::Approx(1 - oracle::ref_giou(p, t)));
    CHECK(box_loss(p, t, BoxLossKind::diou).value == doctest::Approx(1 - oracle::ref_diou(p, t)));
    CHECK(box_loss(p, t, BoxLossKind::ciou).value == doctest::Approx(1 - oracle::ref_ciou(p, t)));
  }
}

TEST_CASE("box_loss gradients match finite differences") {
  RandomSource rng(22);
  int checked = 0;
  for (int i = 0; i < 300; ++i) {
    const auto [p, t] = overlapping_pair(rng);
    for (int k = 0; k < 4; ++k) {
      const auto g = box_loss(p, t, kKinds[k]).gradient;
      const auto fd = oracle::fd_box_gradient(p, t, k, 1e-4);
      double scale = 1e-8;
      double err = 0;
      for (int c = 0; c < 4; ++c) {
        scale = std::max(scale, std::abs(fd[c]));
        err = std::max(err, std::abs(g[c] - fd[c]));
      }
      // Pairs with a coordinate within h of a kink are excluded.
      bool near_kink = false;
      for (double d : {p.x1 - t.x1, p.x2 - t.x2, p.y1 - t.y1, p.y2 - t.y2, p.x2 - t.x1,
                       p.x1 - t.x2, p.y2 - t.y1, p.y1 - t.y2}) {
        near_kink = near_kink || std::abs(d) < 1e-3;
      }
      if (near_kink) continue;
      ++checked;
      CHECK(err <= 1e-3 * scale);
    }
  }
  CHECK(checked > 1000);
}

TEST_CASE("box_loss subgradient conventions") {
  const BBox t{0, 0, 10, 10};
  SUBCASE("identical boxes: zero loss, ties resolve to pred") {
    const auto l = box_loss(t, t, BoxLossKind::iou);
    CHECK(l.value == 0.0);
    // pred supplies every intersection edge, so this is the derivative from
    // the shrinking side: moving x1 right by d gives iou 1 - d / 10.
    CHECK(l.gradient[0] == doctest::Approx(0.1));
    CHECK(l.gradient[1] == doctest::Approx(0.1));
    CHECK(l.gradient[2] == doctest::Approx(-0.1));
    CHECK(l.gradient[3] == doctest::Approx(-0.1));
  }
  SUBCASE("touching boxes use the overlapping side") {
    const BBox p{10, 0, 20, 10};
    const auto l = box_loss(p, t, BoxLossKind::iou);
    CHECK(l.value == 1.0);
    // Moving x1 left creates overlap: d(loss)/dx1 = ih / union = 10 / 200.
    CHECK(l.gradient[0] == doctest::Approx(10.0 / 200));
  }
  SUBCASE("disjoint boxes give zero iou gradient but nonzero giou gradient") {
    const BBox p{20, 20, 30, 30};
    const auto li = box_loss(p, t, BoxLossKind::iou);
    for (double g : li.gradient) CHECK(g == 0.0);
    const auto lg = box_loss(p, t, BoxLossKind::giou);
    CHECK(lg.value > 1.0);
    CHECK(lg.gradient[0] > 0.0);  // shrinking pred widens the empty enclosure
  }
  CHECK_THROWS_AS(box_loss({0, 0, 0, 5}, t, BoxLossKind::ciou), DomainError);
}

TEST_CASE("iou family ordering and invariances") {
  RandomSource rng(23);
  for (int i = 0; i < 2000; ++i) {
    const BBox a = test::random_box(rng);
    const BBox b = test::random_box(rng);
    CHECK(ciou(a, b) <= diou(a, b) + 1e-9);
    CHECK(diou(a, b) <= iou(a, b) + 1e-9);
    CHECK(giou(a, b) <= iou(a, b) + 1e-9);
    const double dx = rng.uniform(-50, 50);
    const double dy = rng.uniform(-50, 50);
    const BBox as{a.x1 + dx, a.y1 + dy, a.x2 + dx, a.y2 + dy};
    const BBox bs{b.x1 + dx, b.y1 + dy, b.x2 + dx, b.y2 + dy};
    CHECK(ciou(as, bs) == doctest::Approx(ciou(a, b)).epsilon(1e-9));
    const double s = rng.uniform(0.1, 10);
    const BBox ak{a.x1 * s, a.y1 * s, a.x2 * s, a.y2 * s};
    const BBox bk{b.x1 * s, b.y1 * s, b.x2 * s, b.y2 * s};
    CHECK(giou(ak, bk) == doctest::Approx(giou(a, b)).epsilon(1e-9));
    CHECK(ciou(a, a) == doctest::Approx(1.0));
  }
}

TEST_CASE("bce, focal and label smoothing") {
  CHECK(binary_cross_entropy(0.5, 1.0) == doctest::Approx(std::log(2.0)));
  CHECK(binary_cross_entropy(0.9, 0.0) == doctest::Approx(-std::log(0.1)));
  CHECK(binary_cross_entropy(1.0, 0.0) == doctest::Approx(-std::log(kProbEpsilon)));
  CHECK(std::isfinite(binary_cross_entropy(0.0, 1.0)));
  // Minimised at p = t for soft targets.
  CHECK(binary_cross_entropy(0.3, 0.3) < binary_cross_entropy(0.31, 0.3));
  CHECK(binary_cross_entropy(0.3, 0.3) < binary_cross_entropy(0.29, 0.3));

  CHECK(focal_loss(0.9, 1, 1.0, 0.0) == doctest::Approx(binary_cross_entropy(0.9, 1.0)));
  CHECK(focal_loss(0.9, 1, 0.25, 2.0) == doctest::Approx(0.25 * 0.01 * -std::log(0.9)));
  CHECK(focal_loss(0.9, 0, 0.25, 2.0) == doctest::Approx(0.25 * 0.81 * -std::log(0.1)));
  // Easy examples are down-weighted relative to BCE.
  CHECK(focal_loss(0.95, 1, 1.0, 2.0) < 0.01 * binary_cross_entropy(0.95, 1.0));

  const std::vector<double> onehot{0, 1, 0, 0};
  const auto smooth = label_smooth(onehot, 0.1);
  CHECK(smooth[1] == doctest::Approx(0.925));
  CHECK(smooth[0] == doctest::Approx(0.025));
  double sum = 0;
  for (double v : smooth) sum += v;
  CHECK(sum == doctest::Approx(1.0));
  CHECK(label_smooth(onehot, 0.0) == onehot);
  CHECK_THROWS_AS(label_smooth(onehot, 1.0), DomainError);
  CHECK_THROWS_AS(label_smooth(onehot, -0.1), DomainError);
}

TEST_CASE("best_anchor picks the best centred-shape overlap") {
  HeadConfig head;
  head.anchors = {{{AnchorBox{12, 16}, AnchorBox{19, 36}, AnchorBox{40, 28}},
                   {AnchorBox{36, 75}, AnchorBox{76, 55}, AnchorBox{72, 146}},
                   {AnchorBox{142, 110}, AnchorBox{192, 243}, AnchorBox{459, 401}}}};
  for (int s = 0; s < 3; ++s) {
    for (int a = 0; a < 3; ++a) {
      const AnchorBox& ab = head.anchors[s][a];
      CHECK(best_anchor(head, ab.width, ab.height) == s * 3 + a);
    }
  }
  CHECK(best_anchor(head, 1, 1) == 0);
  CHECK(best_anchor(head, 1000, 1000) == 8);
  HeadConfig dup = head;
  dup.anchors[1][0] = dup.anchors[0][0];
  CHECK(best_anchor(dup, 12, 16) == 0);  // tie goes to the lower index
}

TEST_CASE("detection_loss on a hand-built single target") {
  HeadConfig head;
  head.num_classes = 2;
  for (auto& scale : head.anchors) scale = {AnchorBox{100, 100}, AnchorBox{200, 200}, AnchorBox{300, 300}};
  head.anchors[0][1] = AnchorBox{16, 16};
  const double p_obj = 0.2;
  std::vector<Tensor> raw;
  for (int g : {4, 2, 1}) raw.emplace_back(Shape{1, 21, g, g}, static_cast<float>(logit(p_obj)));

  // 16x16 target centred in cell (1, 2) of the stride-8 grid -> anchor 1.
  const BBox gt{8 + 4 - 8, 16 + 4 - 8, 8 + 4 + 8, 16 + 4 + 8};
  const int base = 7;
  raw[0].at(0, base + 0, 2, 1) = 0.0f;
  raw[0].at(0, base + 1, 2, 1) = 0.0f;
  raw[0].at(0, base + 2, 2, 1) = 0.0f;
  raw[0].at(0, base + 3, 2, 1) = 0.0f;
  raw[0].at(0, base + 4, 2, 1) = static_cast<float>(logit(0.7));
  raw[0].at(0, base + 5, 2, 1) = static_cast<float>(logit(0.6));
  raw[0].at(0, base + 6, 2, 1) = static_cast<float>(logit(0.1));
  const std::vector<TargetBox> targets{{0, {gt, 1, 1.0}}};

  const auto l = detection_loss(raw, targets, head);
  CHECK(l.assigned == 1);
  // Predicted box equals the target: centre (8 + 4, 16 + 4), size 16.
  CHECK(l.box == doctest::Approx(0.0).epsilon(1e-6));
  CHECK(l.cls == doctest::Approx(-std::log(0.4) - std::log(0.1)).epsilon(1e-6));
  const double cells = 3.0 * (16 + 4 + 1);
  const double expected_obj = ((cells - 1) * -std::log(1 - p_obj) - std::log(0.7)) / cells;
  CHECK(l.obj == doctest::Approx(expected_obj).epsilon(1e-6));
  CHECK(l.total == doctest::Approx(l.box + l.obj + l.cls));

  const auto weighted = detection_loss(raw, targets, head, {2.0, 3.0, 0.5});
  CHECK(weighted.total == doctest::Approx(2 * l.box + 3 * l.obj + 0.5 * l.cls));

  ClassLossOptions smooth;
  smooth.label_smoothing = 0.2;
  const auto ls = detection_loss(raw, targets, head, {}, smooth);
  CHECK(ls.cls == doctest::Approx(binary_cross_entropy(0.6, 0.1) + binary_cross_entropy(0.1, 0.9))
                      .epsilon(1e-6));

  const std::vector<TargetBox> none;
  const auto empty = detection_loss(raw, none, head);
  CHECK(empty.assigned == 0);
  CHECK(empty.box == 0.0);
  CHECK(empty.obj == doctest::Approx(((cells - 1) * -std::log(1 - p_obj) - std::log(0.3)) / cells)
                         .epsilon(1e-6));

  const std::vector<TargetBox> outside{{0, {{-1, 0, 5, 5}, 0, 1.0}}};
  CHECK_THROWS_AS(detection_loss(raw, outside, head), DomainError);
  const std::vector<TargetBox> bad_class{{0, {gt, 2, 1.0}}};
  CHECK_THROWS_AS(detection_loss(raw, bad_class, head), DomainError);
  const std::vector<TargetBox> bad_image{{1, {gt, 0, 1.0}}};
  CHECK_THROWS_AS(detection_loss(raw, bad_image, head), DomainError);
}

TEST_CASE("detection_loss decreases as the prediction approaches the target") {
  HeadConfig head;
  head.num_classes = 1;
  for (auto& scale : head.anchors) scale = {AnchorBox{20, 20}, AnchorBox{200, 200}, AnchorBox{300, 300}};
  std::vector<Tensor> raw;
  for (int g : {4, 2, 1}) raw.emplace_back(Shape{1, 18, g, g}, -4.0f);
  const std::vector<TargetBox> targets{{0, {{4, 4, 24, 24}, 0, 1.0}}};
  double previous = 1e9;
  for (float tw : {2.0f, 1.0f, 0.5f, 0.0f}) {
    raw[0].at(0, 2, 1, 1) = tw;
    raw[0].at(0, 3, 1, 1) = tw;
    raw[0].at(0, 0, 1, 1) = static_cast<float>(logit(0.75));
    raw[0].at(0, 1, 1, 1) = static_cast<float>(logit(0.75));
    const double box = detection_loss(raw, targets, head).box;
    CHECK(box < previous);
    previous = box;
  }
  CHECK(previous == doctest::Approx(0.0).epsilon(1e-6));
}
