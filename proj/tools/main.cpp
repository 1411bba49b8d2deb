#include <iostream>
#include <map>

#include "CLI11.hpp"
#include "commands.hpp"

namespace fs = std::filesystem;
using namespace yolo4::cli;

int main(int argc, char** argv) {
  CLI::App app{"yolo4: YOLOv4 detection engine"};
  app.require_subcommand(1);
  app.fallthrough();

  RunConfig rc;
  std::string weights;
  std::string nms_kind = "iou";
  app.add_option("--config", rc.config, "model config file");
  app.add_option("--weights", weights, "weights file");
  app.add_flag("--random-weights", rc.random_weights, "use seeded random weights");
  app.add_option("--size", rc.size, "square input size, multiple of 32");
  app.add_option("--conf", rc.conf, "confidence threshold");
  app.add_option("--nms-iou", rc.nms_iou, "NMS threshold");
  app.add_option("--nms-kind", nms_kind, "NMS criterion")
      ->check(CLI::IsMember({"iou", "diou"}));
  app.add_option("--threads", rc.threads, "worker threads");
  app.add_option("--seed", rc.seed, "random seed");
  app.add_option("--out", rc.out, "output directory");

  auto* inspect = app.add_subcommand("inspect", "print layer shapes and parameter counts");

  std::vector<fs::path> images;
  bool annotate = false;
  auto* detect = app.add_subcommand("detect", "run detection on images");
  detect->add_option("images", images, "image files (PPM or BMP)")->required();
  detect->add_flag("--annotate", annotate, "write annotated copies under <out>/annotated");

  std::vector<int> sizes{416, 512, 608};
  int iterations = 5;
  auto* bench = app.add_subcommand("bench", "measure end-to-end latency");
  bench->add_option("--sizes", sizes, "input sizes")->delimiter(',');
  bench->add_option("--iterations", iterations, "iterations per size, first is warmup");

  fs::path manifest;
  std::string detections;
  auto* eval = app.add_subcommand("eval", "COCO-style AP over a manifest");
  eval->add_option("manifest", manifest, "manifest file")->required();
  eval->add_option("--detections", detections, "evaluate these records instead of running the model");

  std::string op;
  int count = 1;
  auto* augment = app.add_subcommand("augment-preview", "write augmented samples");
  augment->add_option("manifest", manifest, "manifest file")->required();
  augment->add_option("--op", op, "operation")->required();
  augment->add_option("--count", count, "number of samples");

  fs::path dest;
  auto* init = app.add_subcommand("init-weights", "write seeded random weights");
  init->add_option("dest", dest, "output weights file")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kExitOk : kExitUsage;
  }
  if (!weights.empty()) rc.weights = weights;
  rc.nms_kind = nms_kind == "diou" ? yolo4::NmsCriterion::diou : yolo4::NmsCriterion::iou;

  if (*inspect) return cmd_inspect(rc, std::cout, std::cerr);
  if (*detect) return cmd_detect(rc, images, annotate, std::cout, std::cerr);
  if (*bench) return cmd_bench(rc, sizes, iterations, std::cout, std::cerr);
  if (*eval) {
    std::optional<fs::path> dets;
    if (!detections.empty()) dets = detections;
    return cmd_eval(rc, manifest, dets, std::cout, std::cerr);
  }
  if (*augment) return cmd_augment_preview(rc, manifest, op, count, std::cout, std::cerr);
  if (*init) return cmd_init_weights(rc, dest, std::cout, std::cerr);
  return kExitUsage;
}
