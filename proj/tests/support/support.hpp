#pragma once

#include <filesystem>
#include <string>
#include <string_view>

#include "yolo4/augment.hpp"
#include "yolo4/box.hpp"
#include "yolo4/model_config.hpp"
#include "yolo4/rng.hpp"
#include "yolo4/tensor.hpp"

namespace yolo4::test {

std::filesystem::path source_dir();
std::filesystem::path data_dir();
std::filesystem::path golden_dir();
std::filesystem::path bundled_config();  // configs/yolov4-608.cfg
std::filesystem::path slim_config();     // tests/data/yolov4-slim.cfg

std::string read_file(const std::filesystem::path& p);
void write_file(const std::filesystem::path& p, const std::string& text);

/// Fresh directory removed on destruction.
class TempDir {
 public:
  explicit TempDir(const std::string& tag);
  ~TempDir();
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  const std::filesystem::path& path() const noexcept { return path_; }
  std::filesystem::path operator/(const std::string& name) const { return path_ / name; }

 private:
  std::filesystem::path path_;
};

/// Box with corners in [0, extent) and sides of at least min_side.
BBox random_box(RandomSource& rng, double extent = 100.0, double min_side = 1.0);

Tensor random_tensor(Shape s, RandomSource& rng, double lo = -1.0, double hi = 1.0);

/// Max |a - b| / max(1, |b|) over all elements.
double max_rel_diff(const Tensor& a, const Tensor& b);

}  // namespace yolo4::test

namespace yolo4::test {

/// Random image of extent w x h carrying up to max_boxes valid labels.
LabeledImage random_labeled_image(RandomSource& rng, int w, int h, int max_boxes);

/// Augmentation names exercised by the determinism suites.
inline constexpr const char* kAugmentOps[] = {"hflip",  "scale",  "crop",   "photometric",
                                              "cutout", "gridmask", "mixup", "cutmix",
                                              "mosaic"};

/// Builds inputs from `seed` and applies one op; fully determined by its
/// arguments.
LabeledImage run_augment_op(std::string_view op, std::uint64_t seed);

/// Every box lies inside the image and has positive extent.
bool boxes_in_bounds(const LabeledImage& item);

}  // namespace yolo4::test
