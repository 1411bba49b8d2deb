#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "yolo4/model_config.hpp"
#include "yolo4/postprocess.hpp"

namespace yolo4::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitFailure = 1;
inline constexpr int kExitUsage = 2;

/// Bad flags or invalid input data; maps to kExitUsage.
class UsageError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct RunConfig {
  std::filesystem::path config;
  std::optional<std::filesystem::path> weights;
  bool random_weights = false;  // seeded by `seed` when no weights file is given
  int size = 0;                 // 0 keeps the config's input size
  double conf = 0.25;
  double nms_iou = 0.45;
  NmsCriterion nms_kind = NmsCriterion::iou;
  int threads = 1;
  std::uint64_t seed = 0;
  std::filesystem::path out;  // empty: stdout / current directory
};

/// Throws UsageError when size is not a positive multiple of 32, a
/// threshold is outside [0, 1] or threads < 1.
void validate(const RunConfig& rc);

/// Backbone parameter target and tolerance reported by inspect.
inline constexpr double kBackboneTarget = 27.6e6;
inline constexpr double kBackboneTolerance = 0.02;

/// Rows of the architecture summary: input, backbone layers, head.
std::string architecture_table(const ModelGraph& g);
std::string inspect_report(const ModelGraph& g, const std::string& source);

struct BenchSample {
  int size = 0;
  int threads = 1;
  std::vector<double> latencies_ms;  // warmup excluded
  double mean_ms = 0;
  double std_ms = 0;
  double fps = 0;
};

/// Letterbox + forward + decode + NMS on a fixed synthetic 640x480 image.
/// The first iteration is warmup. Requires iterations >= 3.
std::vector<BenchSample> run_bench(const RunConfig& rc, std::span<const int> sizes, int iterations);

std::string machine_description();

int cmd_inspect(const RunConfig& rc, std::ostream& out, std::ostream& err);
int cmd_detect(const RunConfig& rc, std::span<const std::filesystem::path> images, bool annotate,
               std::ostream& out, std::ostream& err);
int cmd_bench(const RunConfig& rc, std::span<const int> sizes, int iterations, std::ostream& out,
              std::ostream& err);
/// With `detections` set, records are read from that file instead of
/// running the model.
int cmd_eval(const RunConfig& rc, const std::filesystem::path& manifest,
             const std::optional<std::filesystem::path>& detections, std::ostream& out,
             std::ostream& err);
int cmd_augment_preview(const RunConfig& rc, const std::filesystem::path& manifest,
                        const std::string& op, int count, std::ostream& out, std::ostream& err);
int cmd_init_weights(const RunConfig& rc, const std::filesystem::path& dest, std::ostream& out,
                     std::ostream& err);

/// Operation names accepted by augment-preview.
const std::vector<std::string>& augment_ops();

}  // namespace yolo4::cli
