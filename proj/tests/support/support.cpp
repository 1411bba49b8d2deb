#include "support.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include <unistd.h>

namespace yolo4::test {

namespace fs = std::filesystem;

fs::path source_dir() { return YOLO4_SOURCE_DIR; }
fs::path data_dir() { return YOLO4_TEST_DATA_DIR; }
fs::path golden_dir() { return YOLO4_GOLDEN_DIR; }
fs::path bundled_config() { return source_dir() / "configs" / "yolov4-608.cfg"; }
fs::path slim_config() { return data_dir() / "yolov4-slim.cfg"; }

std::string read_file(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + p.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_file(const fs::path& p, const std::string& text) {
  std::ofstream out(p, std::ios::binary);
  out << text;
}

TempDir::TempDir(const std::string& tag) {
  static int counter = 0;
  path_ = fs::temp_directory_path() /
          ("yolo4-" + tag + "-" + std::to_string(::getpid()) + "-" + std::to_string(counter++));
  fs::remove_all(path_);
  fs::create_directories(path_);
}

TempDir::~TempDir() {
  std::error_code ec;
  fs::remove_all(path_, ec);
}

BBox random_box(RandomSource& rng, double extent, double min_side) {
  const double x1 = rng.uniform(0, extent - min_side);
  const double y1 = rng.uniform(0, extent - min_side);
  const double x2 = rng.uniform(x1 + min_side, extent);
  const double y2 = rng.uniform(y1 + min_side, extent);
  return {x1, y1, x2, y2};
}

Tensor random_tensor(Shape s, RandomSource& rng, double lo, double hi) {
  Tensor t(s);
  for (float& v : t.data()) v = static_cast<float>(rng.uniform(lo, hi));
  return t;
}

double max_rel_diff(const Tensor& a, const Tensor& b) {
  if (a.shape() != b.shape()) return INFINITY;
  double worst = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double d = std::abs(double(a.data()[i]) - b.data()[i]) / std::max(1.0, std::abs(double(b.data()[i])));
    worst = std::max(worst, d);
  }
  return worst;
}

}  // namespace yolo4::test

namespace yolo4::test {

LabeledImage random_labeled_image(RandomSource& rng, int w, int h, int max_boxes) {
  LabeledImage item{random_tensor({1, 3, h, w}, rng, 0.0, 1.0), {}};
  const int n = rng.uniform_int(0, max_boxes);
  for (int i = 0; i < n; ++i) {
    const double bw = rng.uniform(2.0, w);
    const double bh = rng.uniform(2.0, h);
    const double x = rng.uniform(0.0, w - bw);
    const double y = rng.uniform(0.0, h - bh);
    item.boxes.push_back({{x, y, x + bw, y + bh}, rng.uniform_int(0, 4), 1.0});
  }
  return item;
}

LabeledImage run_augment_op(std::string_view op, std::uint64_t seed) {
  RandomSource rng(seed);
  const int w = rng.uniform_int(24, 64);
  const int h = rng.uniform_int(24, 64);
  const LabeledImage a = random_labeled_image(rng, w, h, 6);
  if (op == "hflip") return geometric(a, GeometricOp::hflip());
  if (op == "scale") return geometric(a, GeometricOp::scaled(rng.uniform(0.5, 1.5)));
  if (op == "crop") return random_geometric(a, {}, rng);
  if (op == "photometric") return photometric(a, 0.2, 0.3, 0.1, rng);
  if (op == "cutout") return cutout(a, rng.uniform_int(1, 3), rng.uniform_int(1, 16), rng);
  if (op == "gridmask") return grid_mask(a, rng.uniform_int(2, 16), rng.uniform(0.0, 0.9), rng);
  const LabeledImage b = random_labeled_image(rng, w, h, 6);
  if (op == "mixup") return mixup(a, b, rng.uniform());
  if (op == "cutmix") return cutmix(a, b, random_cutmix_rect(w, h, 0.1, 0.6, rng));
  if (op == "mosaic") {
    std::vector<LabeledImage> four{a, b};
    four.push_back(random_labeled_image(rng, rng.uniform_int(16, 80), rng.uniform_int(16, 80), 6));
    four.push_back(random_labeled_image(rng, rng.uniform_int(16, 80), rng.uniform_int(16, 80), 6));
    return mosaic4(four, 64, {}, rng).item;
  }
  throw std::invalid_argument("unknown op " + std::string(op));
}

bool boxes_in_bounds(const LabeledImage& item) {
  for (const LabeledBox& lb : item.boxes) {
    const BBox& b = lb.box;
    if (!(b.x1 >= 0 && b.y1 >= 0 && b.x2 <= item.width() && b.y2 <= item.height())) return false;
    if (!(b.x2 > b.x1 && b.y2 > b.y1)) return false;
  }
  return true;
}

}  // namespace yolo4::test
