#pragma once

#include <array>
#include <span>
#include <vector>

#include "yolo4/box.hpp"
#include "yolo4/rng.hpp"
#include "yolo4/tensor.hpp"

namespace yolo4 {

/// (1, 3, H, W) image with pixel-space labels inside [0, W] x [0, H].
struct LabeledImage {
  Tensor image;
  std::vector<LabeledBox> boxes;

  int width() const noexcept { return image.w(); }
  int height() const noexcept { return image.h(); }
};

/// Clipped boxes survive only with at least this area and side length.
inline constexpr double kMinBoxArea = 4.0;
inline constexpr double kMinBoxSide = 2.0;

/// Integer pixel rectangle [x, x + w) x [y, y + h).
struct PixelRect {
  int x = 0;
  int y = 0;
  int w = 0;
  int h = 0;

  BBox box() const noexcept { return {double(x), double(y), double(x + w), double(y + h)}; }
  friend bool operator==(const PixelRect&, const PixelRect&) = default;
};

/// Clips every box to `region` and drops the ones below the survival limits.
std::vector<LabeledBox> clip_boxes(std::span<const LabeledBox> boxes, const BBox& region);

// ---- photometric --------------------------------------------------------

struct PhotometricParams {
  double brightness = 0.0;  // additive
  double contrast = 1.0;    // gain about 0.5
  double hue = 0.0;         // fraction of a full turn, wraps around
};

/// hue rotation in HSV, then contrast, then brightness; clamps to [0, 1].
Tensor photometric(const Tensor& image, const PhotometricParams& p);

/// Draws brightness in [-b, b], contrast in [1 - c, 1 + c] and hue in [-h, h].
PhotometricParams sample_photometric(double b, double c, double h, RandomSource& rng);

LabeledImage photometric(const LabeledImage& item, double b, double c, double h,
                         RandomSource& rng);

// ---- geometric ----------------------------------------------------------

struct GeometricOp {
  enum class Kind { hflip, scale, crop };
  Kind kind = Kind::hflip;
  double scale = 1.0;  // Kind::scale
  PixelRect crop;      // Kind::crop

  static GeometricOp hflip() { return {}; }
  static GeometricOp scaled(double s) { return {Kind::scale, s, {}}; }
  static GeometricOp cropped(PixelRect r) { return {Kind::crop, 1.0, r}; }
};

/// hflip mirrors x -> W - x exactly. scale resizes bilinearly to
/// round(s * W) x round(s * H). crop keeps the rectangle. Boxes follow the
/// same map; scale and crop clip them and drop the ones below the limits.
LabeledImage geometric(const LabeledImage& item, const GeometricOp& op);

struct GeometricRanges {
  double flip_probability = 0.5;
  double scale_min = 0.75;
  double scale_max = 1.25;
  double min_crop_fraction = 0.6;
};

/// Random flip, then scale, then a crop covering at least min_crop_fraction
/// of each side.
LabeledImage random_geometric(const LabeledImage& item, const GeometricRanges& ranges,
                              RandomSource& rng);

// ---- occlusion ----------------------------------------------------------

/// Zeroes n_holes squares of side hole_size. Each hole's top-left corner is
/// uniform over the positions that keep the hole inside the image; a hole at
/// least as large as the image covers all of it. Labels are kept.
LabeledImage cutout(const LabeledImage& item, int n_holes, int hole_size, RandomSource& rng);

/// Square holes of side round(ratio * d) repeated at pitch d with a uniform
/// random phase. Requires d >= 2 and ratio in [0, 1).
LabeledImage grid_mask(const LabeledImage& item, int d, double ratio, RandomSource& rng);

// ---- multi-image --------------------------------------------------------

/// lambda * a + (1 - lambda) * b; a-box weights scale by lambda, b-box
/// weights by 1 - lambda.
LabeledImage mixup(const LabeledImage& a, const LabeledImage& b, double lambda);

/// Pastes `rect` of b into a. b-boxes are clipped to rect; a-boxes shrink to
/// the bounding box of their part outside rect. Both are then filtered.
LabeledImage cutmix(const LabeledImage& a, const LabeledImage& b, const PixelRect& rect);

/// Rectangle with sides drawn so its area fraction is uniform in
/// [min_frac, max_frac] and position uniform inside the image.
PixelRect random_cutmix_rect(int width, int height, double min_frac, double max_frac,
                             RandomSource& rng);

struct MosaicOptions {
  double pivot_min = 0.3;  // fractions of the canvas side
  double pivot_max = 0.7;
  float fill = 0.5f;
};

struct MosaicResult {
  LabeledImage item;
  int pivot_x = 0;
  int pivot_y = 0;
  /// Top-left, top-right, bottom-left, bottom-right.
  std::array<PixelRect, 4> quadrants{};
  /// Source quadrant of each output box.
  std::vector<int> box_quadrant;
};

/// Four images around a random integer pivot. Input i fills quadrant i,
/// scaled (nearest) just enough to cover it and anchored at the pivot corner.
MosaicResult mosaic4(std::span<const LabeledImage> items, int canvas, const MosaicOptions& opts,
                     RandomSource& rng);

// ---- feature level ------------------------------------------------------

/// Keeps x unchanged unless training. Otherwise samples block seeds on the
/// valid region with rate ((1 - k) / b^2) * (h * w) / ((h - b + 1)(w - b + 1)),
/// zeroes the b x b block around each seed and rescales survivors by
/// total / kept over the whole tensor.
Tensor dropblock(const Tensor& x, int block_size, double keep_prob, bool training,
                 RandomSource& rng);

/// The per-cell seed rate used by dropblock.
double dropblock_gamma(int h, int w, int block_size, double keep_prob);

}  // namespace yolo4
