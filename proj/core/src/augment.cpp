#include "yolo4/augment.hpp"

#include <algorithm>
#include <cmath>

#include "yolo4/error.hpp"
#include "yolo4/ops.hpp"

namespace yolo4 {

namespace {

void require_image(const LabeledImage& item) {
  if (item.image.n() != 1 || item.image.c() != 3) {
    throw DimensionError("c", "augmentation expects a (1, 3, H, W) image, got " +
                                  to_string(item.image.shape()));
  }
}

bool survives(const BBox& b) {
  return b.width() >= kMinBoxSide && b.height() >= kMinBoxSide && b.area() >= kMinBoxArea;
}

BBox clip(const BBox& b, const BBox& r) {
  BBox c{std::clamp(b.x1, r.x1, r.x2), std::clamp(b.y1, r.y1, r.y2),
         std::clamp(b.x2, r.x1, r.x2), std::clamp(b.y2, r.y1, r.y2)};
  return c;
}

// r, g, b and h, s, v all in [0, 1].
void rgb_to_hsv(double r, double g, double b, double& h, double& s, double& v) {
  const double mx = std::max({r, g, b});
  const double mn = std::min({r, g, b});
  const double d = mx - mn;
  v = mx;
  s = mx > 0 ? d / mx : 0.0;
  if (d <= 0) {
    h = 0;
    return;
  }
  if (mx == r) {
    h = (g - b) / d;
  } else if (mx == g) {
    h = 2.0 + (b - r) / d;
  } else {
    h = 4.0 + (r - g) / d;
  }
  h /= 6.0;
  if (h < 0) h += 1.0;
}

void hsv_to_rgb(double h, double s, double v, double& r, double& g, double& b) {
  const double h6 = h * 6.0;
  const int sector = static_cast<int>(std::floor(h6)) % 6;
  const double f = h6 - std::floor(h6);
  const double p = v * (1 - s);
  const double q = v * (1 - s * f);
  const double t = v * (1 - s * (1 - f));
  switch (sector) {
    case 0: r = v, g = t, b = p; break;
    case 1: r = q, g = v, b = p; break;
    case 2: r = p, g = v, b = t; break;
    case 3: r = p, g = q, b = v; break;
    case 4: r = t, g = p, b = v; break;
    default: r = v, g = p, b = q; break;
  }
}

}  // namespace

std::vector<LabeledBox> clip_boxes(std::span<const LabeledBox> boxes, const BBox& region) {
  std::vector<LabeledBox> out;
  for (const LabeledBox& lb : boxes) {
    LabeledBox c = lb;
    c.box = clip(lb.box, region);
    if (survives(c.box)) out.push_back(c);
  }
  return out;
}

Tensor photometric(const Tensor& image, const PhotometricParams& p) {
  if (image.c() != 3) throw DimensionError("c", "photometric expects 3 channels");
  Tensor out = image;
  const std::size_t plane = image.shape().plane();
  for (int n = 0; n < image.n(); ++n) {
    auto r = out.plane(n, 0);
    auto g = out.plane(n, 1);
    auto b = out.plane(n, 2);
    for (std::size_t i = 0; i < plane; ++i) {
      double rgb[3] = {r[i], g[i], b[i]};
      if (p.hue != 0.0) {
        double h, s, v;
        rgb_to_hsv(std::clamp(rgb[0], 0.0, 1.0), std::clamp(rgb[1], 0.0, 1.0),
                   std::clamp(rgb[2], 0.0, 1.0), h, s, v);
        h = std::fmod(h + p.hue, 1.0);
        if (h < 0) h += 1.0;
        hsv_to_rgb(h, s, v, rgb[0], rgb[1], rgb[2]);
      }
      for (double& c : rgb) c = std::clamp((c - 0.5) * p.contrast + 0.5 + p.brightness, 0.0, 1.0);
      r[i] = static_cast<float>(rgb[0]);
      g[i] = static_cast<float>(rgb[1]);
      b[i] = static_cast<float>(rgb[2]);
    }
  }
  return out;
}

PhotometricParams sample_photometric(double b, double c, double h, RandomSource& rng) {
  if (b < 0 || c < 0 || c > 1 || h < 0) {
    throw DomainError("photometric ranges must be nonnegative with contrast range <= 1");
  }
  PhotometricParams p;
  p.brightness = rng.uniform(-b, b);
  p.contrast = rng.uniform(1 - c, 1 + c);
  p.hue = rng.uniform(-h, h);
  return p;
}

LabeledImage photometric(const LabeledImage& item, double b, double c, double h,
                         RandomSource& rng) {
  require_image(item);
  return {photometric(item.image, sample_photometric(b, c, h, rng)), item.boxes};
}

LabeledImage geometric(const LabeledImage& item, const GeometricOp& op) {
  require_image(item);
  const int w = item.width();
  const int h = item.height();
  switch (op.kind) {
    case GeometricOp::Kind::hflip: {
      LabeledImage out{Tensor(item.image.shape()), item.boxes};
      for (int ch = 0; ch < 3; ++ch) {
        const auto src = item.image.plane(0, ch);
        auto dst = out.image.plane(0, ch);
        for (int y = 0; y < h; ++y) {
          const std::size_t row = static_cast<std::size_t>(y) * w;
          std::reverse_copy(src.begin() + row, src.begin() + row + w, dst.begin() + row);
        }
      }
      for (LabeledBox& lb : out.boxes) lb.box = {w - lb.box.x2, lb.box.y1, w - lb.box.x1, lb.box.y2};
      return out;
    }
    case GeometricOp::Kind::scale: {
      if (!(op.scale > 0) || !std::isfinite(op.scale)) throw DomainError("scale must be positive");
      const int nw = static_cast<int>(std::lround(w * op.scale));
      const int nh = static_cast<int>(std::lround(h * op.scale));
      if (nw < 1 || nh < 1) throw DimensionError("w", "scaled image would be empty");
      const double fx = static_cast<double>(nw) / w;
      const double fy = static_cast<double>(nh) / h;
      std::vector<LabeledBox> mapped = item.boxes;
      for (LabeledBox& lb : mapped) {
        lb.box = {lb.box.x1 * fx, lb.box.y1 * fy, lb.box.x2 * fx, lb.box.y2 * fy};
      }
      return {resize_bilinear(item.image, nw, nh), clip_boxes(mapped, {0, 0, double(nw), double(nh)})};
    }
    case GeometricOp::Kind::crop: {
      const PixelRect& r = op.crop;
      if (r.w <= 0 || r.h <= 0) throw DomainError("crop rectangle is empty");
      if (r.x < 0 || r.y < 0 || r.x + r.w > w || r.y + r.h > h) {
        throw DomainError("crop rectangle lies outside the image");
      }
      Tensor img(Shape{1, 3, r.h, r.w});
      for (int ch = 0; ch < 3; ++ch) {
        for (int y = 0; y < r.h; ++y) {
          for (int x = 0; x < r.w; ++x) img.at(0, ch, y, x) = item.image.at(0, ch, r.y + y, r.x + x);
        }
      }
      std::vector<LabeledBox> mapped = item.boxes;
      for (LabeledBox& lb : mapped) {
        lb.box = {lb.box.x1 - r.x, lb.box.y1 - r.y, lb.box.x2 - r.x, lb.box.y2 - r.y};
      }
      return {std::move(img), clip_boxes(mapped, {0, 0, double(r.w), double(r.h)})};
    }
  }
  return item;
}

LabeledImage random_geometric(const LabeledImage& item, const GeometricRanges& ranges,
                              RandomSource& rng) {
  LabeledImage cur = item;
  if (rng.bernoulli(ranges.flip_probability)) cur = geometric(cur, GeometricOp::hflip());
  cur = geometric(cur, GeometricOp::scaled(rng.uniform(ranges.scale_min, ranges.scale_max)));
  const double frac = std::clamp(ranges.min_crop_fraction, 0.0, 1.0);
  const int min_w = std::max(1, static_cast<int>(std::ceil(cur.width() * frac)));
  const int min_h = std::max(1, static_cast<int>(std::ceil(cur.height() * frac)));
  PixelRect r;
  r.w = rng.uniform_int(min_w, cur.width());
  r.h = rng.uniform_int(min_h, cur.height());
  r.x = rng.uniform_int(0, cur.width() - r.w);
  r.y = rng.uniform_int(0, cur.height() - r.h);
  return geometric(cur, GeometricOp::cropped(r));
}

LabeledImage cutout(const LabeledImage& item, int n_holes, int hole_size, RandomSource& rng) {
  require_image(item);
  if (n_holes < 0 || hole_size < 0) throw DomainError("cutout needs nonnegative counts");
  LabeledImage out = item;
  const int w = item.width();
  const int h = item.height();
  for (int i = 0; i < n_holes; ++i) {
    const int x0 = rng.uniform_int(0, std::max(w - hole_size, 0));
    const int y0 = rng.uniform_int(0, std::max(h - hole_size, 0));
    const int x1 = std::min(x0 + hole_size, w);
    const int y1 = std::min(y0 + hole_size, h);
    for (int ch = 0; ch < 3; ++ch) {
      for (int y = y0; y < y1; ++y) {
        for (int x = x0; x < x1; ++x) out.image.at(0, ch, y, x) = 0.0f;
      }
    }
  }
  return out;
}

LabeledImage grid_mask(const LabeledImage& item, int d, double ratio, RandomSource& rng) {
  require_image(item);
  if (d < 2) throw DomainError("grid mask pitch must be at least 2");
  if (!(ratio >= 0.0 && ratio < 1.0)) throw DomainError("grid mask ratio must lie in [0, 1)");
  const int side = static_cast<int>(std::lround(ratio * d));
  const int ox = rng.uniform_int(0, d - 1);
  const int oy = rng.uniform_int(0, d - 1);
  LabeledImage out = item;
  if (side == 0) return out;
  for (int y = 0; y < item.height(); ++y) {
    if ((y + oy) % d >= side) continue;
    for (int x = 0; x < item.width(); ++x) {
      if ((x + ox) % d >= side) continue;
      for (int ch = 0; ch < 3; ++ch) out.image.at(0, ch, y, x) = 0.0f;
    }
  }
  return out;
}

LabeledImage mixup(const LabeledImage& a, const LabeledImage& b, double lambda) {
  require_image(a);
  require_image(b);
  if (a.image.shape() != b.image.shape()) {
    throw DimensionError("w", "mixup inputs differ in extent: " + to_string(a.image.shape()) +
                                  " vs " + to_string(b.image.shape()));
  }
  if (!(lambda >= 0.0 && lambda <= 1.0)) throw DomainError("mixup lambda must lie in [0, 1]");
  LabeledImage out{Tensor(a.image.shape()), {}};
  const auto pa = a.image.data();
  const auto pb = b.image.data();
  auto po = out.image.data();
  for (std::size_t i = 0; i < po.size(); ++i) {
    po[i] = static_cast<float>(lambda * pa[i] + (1.0 - lambda) * pb[i]);
  }
  for (LabeledBox lb : a.boxes) {
    lb.weight *= lambda;
    out.boxes.push_back(lb);
  }
  for (LabeledBox lb : b.boxes) {
    lb.weight *= 1.0 - lambda;
    out.boxes.push_back(lb);
  }
  return out;
}

namespace {

// Shrinks box to the bounding box of box \ rect; false when nothing remains.
bool subtract_rect(BBox& box, const BBox& rect) {
  const bool overlaps_x = rect.x1 < box.x2 && rect.x2 > box.x1;
  const bool overlaps_y = rect.y1 < box.y2 && rect.y2 > box.y1;
  if (!overlaps_x || !overlaps_y) return true;
  const bool spans_x = rect.x1 <= box.x1 && rect.x2 >= box.x2;
  const bool spans_y = rect.y1 <= box.y1 && rect.y2 >= box.y2;
  if (spans_x && spans_y) return false;
  if (spans_y) {
    // Vertical band: the remainder is left and/or right of it.
    if (rect.x1 <= box.x1) box.x1 = rect.x2;
    else if (rect.x2 >= box.x2) box.x2 = rect.x1;
  } else if (spans_x) {
    if (rect.y1 <= box.y1) box.y1 = rect.y2;
    else if (rect.y2 >= box.y2) box.y2 = rect.y1;
  }
  return true;
}

}  // namespace

LabeledImage cutmix(const LabeledImage& a, const LabeledImage& b, const PixelRect& rect) {
  require_image(a);
  require_image(b);
  if (a.image.shape() != b.image.shape()) throw DimensionError("w", "cutmix inputs differ in extent");
  if (rect.w < 0 || rect.h < 0 || rect.x < 0 || rect.y < 0 || rect.x + rect.w > a.width() ||
      rect.y + rect.h > a.height()) {
    throw DomainError("cutmix rectangle lies outside the image");
  }
  LabeledImage out{a.image, {}};
  for (int ch = 0; ch < 3; ++ch) {
    for (int y = rect.y; y < rect.y + rect.h; ++y) {
      for (int x = rect.x; x < rect.x + rect.w; ++x) out.image.at(0, ch, y, x) = b.image.at(0, ch, y, x);
    }
  }
  const BBox r = rect.box();
  const bool empty = rect.w == 0 || rect.h == 0;
  for (LabeledBox lb : a.boxes) {
    if (empty) {
      out.boxes.push_back(lb);
      continue;
    }
    const BBox before = lb.box;
    if (!subtract_rect(lb.box, r)) continue;
    if (lb.box == before || survives(lb.box)) out.boxes.push_back(lb);
  }
  if (!empty) {
    const auto pasted = clip_boxes(b.boxes, r);
    out.boxes.insert(out.boxes.end(), pasted.begin(), pasted.end());
  }
  return out;
}

PixelRect random_cutmix_rect(int width, int height, double min_frac, double max_frac,
                             RandomSource& rng) {
  if (!(min_frac >= 0 && min_frac <= max_frac && max_frac <= 1)) {
    throw DomainError("cutmix area fractions must satisfy 0 <= min <= max <= 1");
  }
  const double side = std::sqrt(rng.uniform(min_frac, max_frac));
  PixelRect r;
  r.w = std::clamp(static_cast<int>(std::lround(width * side)), 0, width);
  r.h = std::clamp(static_cast<int>(std::lround(height * side)), 0, height);
  r.x = rng.uniform_int(0, width - r.w);
  r.y = rng.uniform_int(0, height - r.h);
  return r;
}

MosaicResult mosaic4(std::span<const LabeledImage> items, int canvas, const MosaicOptions& opts,
                     RandomSource& rng) {
  if (items.size() != 4) {
    throw DomainError("mosaic needs exactly 4 images, got " + std::to_string(items.size()));
  }
  if (canvas < 2) throw DimensionError("size", "mosaic canvas must be at least 2 pixels");
  if (!(opts.pivot_min >= 0 && opts.pivot_min <= opts.pivot_max && opts.pivot_max <= 1)) {
    throw DomainError("mosaic pivot range must satisfy 0 <= min <= max <= 1");
  }
  for (const LabeledImage& it : items) require_image(it);

  MosaicResult res;
  res.pivot_x = static_cast<int>(std::lround(rng.uniform(opts.pivot_min, opts.pivot_max) * canvas));
  res.pivot_y = static_cast<int>(std::lround(rng.uniform(opts.pivot_min, opts.pivot_max) * canvas));
  const int px = res.pivot_x;
  const int py = res.pivot_y;
  res.quadrants = {PixelRect{0, 0, px, py}, PixelRect{px, 0, canvas - px, py},
                   PixelRect{0, py, px, canvas - py}, PixelRect{px, py, canvas - px, canvas - py}};
  res.item.image = Tensor(Shape{1, 3, canvas, canvas}, opts.fill);

  for (int q = 0; q < 4; ++q) {
    const LabeledImage& src = items[static_cast<std::size_t>(q)];
    const PixelRect& quad = res.quadrants[static_cast<std::size_t>(q)];
    if (quad.w == 0 || quad.h == 0) continue;
    const double sw = src.width();
    const double sh = src.height();
    const double scale = std::max(quad.w / sw, quad.h / sh);
    // Origin of the scaled source on the canvas; its pivot-side corner sits on the pivot.
    const double ox = (q % 2 == 0) ? px - sw * scale : px;
    const double oy = (q / 2 == 0) ? py - sh * scale : py;

    for (int ch = 0; ch < 3; ++ch) {
      for (int y = quad.y; y < quad.y + quad.h; ++y) {
        const int sy = std::clamp(static_cast<int>(std::floor((y + 0.5 - oy) / scale)), 0,
                                  src.height() - 1);
        for (int x = quad.x; x < quad.x + quad.w; ++x) {
          const int sx = std::clamp(static_cast<int>(std::floor((x + 0.5 - ox) / scale)), 0,
                                    src.width() - 1);
          res.item.image.at(0, ch, y, x) = src.image.at(0, ch, sy, sx);
        }
      }
    }
    std::vector<LabeledBox> mapped = src.boxes;
    for (LabeledBox& lb : mapped) {
      lb.box = {lb.box.x1 * scale + ox, lb.box.y1 * scale + oy, lb.box.x2 * scale + ox,
                lb.box.y2 * scale + oy};
    }
    for (const LabeledBox& lb : clip_boxes(mapped, quad.box())) {
      res.item.boxes.push_back(lb);
      res.box_quadrant.push_back(q);
    }
  }
  return res;
}

double dropblock_gamma(int h, int w, int block_size, double keep_prob) {
  const double b2 = static_cast<double>(block_size) * block_size;
  const double valid = static_cast<double>(h - block_size + 1) * (w - block_size + 1);
  return ((1.0 - keep_prob) / b2) * (static_cast<double>(h) * w / valid);
}

Tensor dropblock(const Tensor& x, int block_size, double keep_prob, bool training,
                 RandomSource& rng) {
  if (block_size < 1 || block_size % 2 == 0) throw DomainError("dropblock block size must be odd");
  if (block_size > x.h() || block_size > x.w()) {
    throw DimensionError("h", "dropblock block size " + std::to_string(block_size) +
                                  " exceeds feature extent " + to_string(x.shape()));
  }
  if (!(keep_prob > 0.0 && keep_prob <= 1.0)) throw DomainError("keep_prob must lie in (0, 1]");
  if (!training || keep_prob == 1.0) return x;

  const double gamma = dropblock_gamma(x.h(), x.w(), block_size, keep_prob);
  const int half = block_size / 2;
  const int w = x.w();
  std::vector<unsigned char> mask(x.size(), 1);
  for (int n = 0; n < x.n(); ++n) {
    for (int c = 0; c < x.c(); ++c) {
      unsigned char* m = mask.data() + (static_cast<std::size_t>(n) * x.c() + c) * x.shape().plane();
      for (int sy = half; sy < x.h() - half; ++sy) {
        for (int sx = half; sx < w - half; ++sx) {
          if (!rng.bernoulli(gamma)) continue;
          for (int y = sy - half; y <= sy + half; ++y) {
            std::fill_n(m + static_cast<std::size_t>(y) * w + (sx - half), block_size, 0);
          }
        }
      }
    }
  }
  std::size_t kept = 0;
  for (unsigned char v : mask) kept += v;
  Tensor out(x.shape());
  if (kept == 0) return out;
  const double rescale = static_cast<double>(mask.size()) / static_cast<double>(kept);
  const auto src = x.data();
  auto dst = out.data();
  for (std::size_t i = 0; i < dst.size(); ++i) {
    dst[i] = mask[i] ? static_cast<float>(src[i] * rescale) : 0.0f;
  }
  return out;
}

}  // namespace yolo4
