#include "commands.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <numeric>
#include <ostream>
#include <set>
#include <sstream>
#include <thread>

#include "yolo4/augment.hpp"
#include "yolo4/dataset.hpp"
#include "yolo4/error.hpp"
#include "yolo4/eval.hpp"
#include "yolo4/image_io.hpp"
#include "yolo4/network.hpp"
#include "yolo4/parallel.hpp"
#include "yolo4/weights.hpp"

namespace yolo4::cli {

namespace fs = std::filesystem;

namespace {

std::string format(const char* fmt, auto... args) {
  char buf[512];
  const int n = std::snprintf(buf, sizeof buf, fmt, args...);
  return std::string(buf, static_cast<std::size_t>(std::clamp(n, 0, int(sizeof buf) - 1)));
}

// Maps library exceptions onto exit codes and a one-line diagnostic.
template <typename Fn>
int guarded(std::ostream& err, Fn&& fn) {
  try {
    return fn();
  } catch (const UsageError& e) {
    err << "error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const ParseError& e) {
    err << "error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kExitFailure;
  }
}

ModelGraph load_graph(const RunConfig& rc) {
  if (rc.config.empty()) throw UsageError("--config is required");
  if (!fs::exists(rc.config)) throw UsageError("config not found: " + rc.config.string());
  ModelGraph g = load_model_config(rc.config.string());
  if (rc.size != 0 && rc.size != g.input_shape().h) g = with_input_size(g, rc.size);
  return g;
}

ParameterStore load_params(const RunConfig& rc, const ModelGraph& g, bool allow_random) {
  if (rc.weights) return load_weights_file(g, rc.weights->string());
  if (rc.random_weights || allow_random) return random_parameters(g, rc.seed);
  throw UsageError("--weights is required (or pass --random-weights)");
}

PostprocessOptions post_options(const RunConfig& rc) {
  return {rc.conf, rc.nms_iou, rc.nms_kind};
}

int input_size(const ModelGraph& g) { return g.input_shape().h; }

void write_file(const fs::path& path, const std::string& text) {
  std::ofstream f(path, std::ios::binary);
  f << text;
  if (!f) throw Error("cannot write " + path.string());
}

Rgb class_color(int class_id) {
  static constexpr Rgb kPalette[] = {{1, 0.2f, 0.2f}, {0.2f, 1, 0.2f}, {0.2f, 0.4f, 1},
                                     {1, 1, 0.2f},    {1, 0.2f, 1},    {0.2f, 1, 1}};
  return kPalette[static_cast<std::size_t>(class_id) % std::size(kPalette)];
}

std::string fixed6(const std::optional<double>& v) {
  return v ? format("%.6f", *v) : std::string("n/a");
}

}  // namespace

void validate(const RunConfig& rc) {
  if (rc.size != 0 && (rc.size < 32 || rc.size % 32 != 0)) {
    throw UsageError("--size must be a positive multiple of 32, got " + std::to_string(rc.size));
  }
  if (!(rc.conf >= 0.0 && rc.conf <= 1.0)) throw UsageError("--conf must lie in [0, 1]");
  if (!(rc.nms_iou >= 0.0 && rc.nms_iou <= 1.0)) throw UsageError("--nms-iou must lie in [0, 1]");
  if (rc.threads < 1) throw UsageError("--threads must be at least 1");
}

// ---- inspect --------------------------------------------------------------

std::string architecture_table(const ModelGraph& g) {
  std::string out = format("%-12s %-9s %-10s %-7s %s\n", "Layer", "Filters", "Size", "Repeat",
                           "Output Size");
  auto extent = [](const FeatureShape& s) { return format("%d x %d", s.h, s.w); };
  for (std::size_t i = 0; i < g.layers.size(); ++i) {
    const LayerSpec& l = g.layers[i];
    const FeatureShape& s = g.shapes[i];
    if (l.kind == LayerKind::input) {
      out += format("%-12s %-9s %-10s %-7s %s\n", "Input Image", "-", "-", "-", extent(s).c_str());
      continue;
    }
    if (l.group != "backbone") continue;
    switch (l.kind) {
      case LayerKind::conv:
        out += format("%-12s %-9d %-10s %-7d %s\n", "Conv", l.filters,
                      format("%d x %d / %d", l.size, l.size, l.stride).c_str(), 1, extent(s).c_str());
        break;
      case LayerKind::csp_block:
        out += format("%-12s %-9d %-10s %-7d %s\n", "CSPBlock", l.filters, "-", l.repeat,
                      extent(s).c_str());
        break;
      case LayerKind::spp:
        out += format("%-12s %-9s %-10s %-7d %s\n", "SPP", "-", "-", 1, extent(s).c_str());
        break;
      default:
        out += format("%-12s %-9s %-10s %-7s %s\n", std::string(to_string(l.kind)).c_str(), "-",
                      "-", "-", extent(s).c_str());
        break;
    }
  }
  auto heads = g.head_layers();
  if (!heads.empty()) {
    std::reverse(heads.begin(), heads.end());  // coarsest grid first
    std::string grids;
    for (int h : heads) {
      if (!grids.empty()) grids += ", ";
      grids += extent(g.shapes[static_cast<std::size_t>(h)]);
    }
    out += format("%-12s %-9s %-10s %-7s %s\n", "YOLO Head",
                  format("%zu Scales", heads.size()).c_str(), "-", "-", grids.c_str());
  }
  return out;
}

std::string inspect_report(const ModelGraph& g, const std::string& source) {
  std::string out;
  const FeatureShape& in = g.input_shape();
  out += "model: " + source + "\n";
  out += format("input: %d x %d x %d\n\n", in.c, in.h, in.w);
  out += format("%4s  %-14s %-10s %7s  %-7s %6s  %-14s %10s\n", "idx", "name", "kind", "filters",
                "size", "repeat", "output", "params");
  for (std::size_t i = 0; i < g.layers.size(); ++i) {
    const LayerSpec& l = g.layers[i];
    const FeatureShape& s = g.shapes[i];
    int in_ch = 0;
    for (int p : g.inputs[i]) in_ch += g.shapes[static_cast<std::size_t>(p)].c;
    const bool has_filters = l.kind == LayerKind::conv || l.kind == LayerKind::csp_block ||
                             l.kind == LayerKind::spp;
    std::string size = "-";
    if (l.kind == LayerKind::conv || l.kind == LayerKind::maxpool) {
      size = format("%dx%d/%d", l.size, l.size, l.stride);
    }
    out += format("%4zu  %-14s %-10s %7s  %-7s %6s  %-14s %10lld\n", i, l.name.c_str(),
                  std::string(to_string(l.kind)).c_str(),
                  has_filters ? std::to_string(l.filters).c_str() : "-", size.c_str(),
                  l.kind == LayerKind::csp_block ? std::to_string(l.repeat).c_str() : "-",
                  format("%dx%dx%d", s.c, s.h, s.w).c_str(),
                  static_cast<long long>(layer_param_count(l, in_ch)));
  }
  out += "\narchitecture\n" + architecture_table(g);

  const std::int64_t backbone = count_params(g, "backbone");
  out += format("\nparameters: total=%lld backbone=%lld neck=%lld head=%lld\n",
                static_cast<long long>(count_params(g)), static_cast<long long>(backbone),
                static_cast<long long>(count_params(g, "neck")),
                static_cast<long long>(count_params(g, "head")));
  const double rel = (static_cast<double>(backbone) - kBackboneTarget) / kBackboneTarget;
  out += format("backbone check: %.2fM vs 27.6M +/- 2%%: %s (%+.1f%%)\n", backbone / 1e6,
                std::abs(rel) <= kBackboneTolerance ? "PASS" : "FAIL", rel * 100.0);
  return out;
}

int cmd_inspect(const RunConfig& rc, std::ostream& out, std::ostream& err) {
  return guarded(err, [&] {
    validate(rc);
    const ModelGraph g = load_graph(rc);
    out << inspect_report(g, rc.config.string());
    return kExitOk;
  });
}

// ---- detect ---------------------------------------------------------------

int cmd_detect(const RunConfig& rc, std::span<const fs::path> images, bool annotate,
               std::ostream& out, std::ostream& err) {
  return guarded(err, [&] {
    validate(rc);
    if (images.empty()) throw UsageError("no images given");
    set_num_threads(rc.threads);
    const ModelGraph g = load_graph(rc);
    const Network net(g, load_params(rc, g, false));
    const PostprocessOptions opts = post_options(rc);
    if (!rc.out.empty()) fs::create_directories(rc.out);
    if (annotate) fs::create_directories((rc.out.empty() ? fs::path(".") : rc.out) / "annotated");

    std::vector<DetectionRecord> records;
    int decoded = 0;
    for (std::size_t i = 0; i < images.size(); ++i) {
      Tensor img;
      try {
        img = decode_image(images[i]);
      } catch (const ImageError& e) {
        err << "warning: skipping " << images[i].string() << ": " << e.what() << "\n";
        continue;
      }
      ++decoded;
      const auto [boxed, meta] = letterbox(img, input_size(g));
      const auto heads = net.forward(boxed);
      const auto dets = postprocess(heads, 0, net.head(), meta, opts);
      for (const Detection& d : dets) records.push_back(to_record(static_cast<int>(i), d));
      if (annotate) {
        for (const Detection& d : dets) {
          const Rgb color = class_color(d.class_id);
          draw_rectangle(img, d.bbox, color);
          draw_text(img, static_cast<int>(d.bbox.x1) + 3, static_cast<int>(d.bbox.y1) + 3,
                    format("%d %.2f", d.class_id, d.score), color);
        }
        const fs::path dest = (rc.out.empty() ? fs::path(".") : rc.out) / "annotated" /
                              (images[i].stem().string() + ".ppm");
        encode_image(img, dest);
      }
    }
    sort_records(records);
    std::string text;
    for (const DetectionRecord& r : records) text += format_record(r) + "\n";
    if (rc.out.empty()) {
      out << text;
    } else {
      write_file(rc.out / "detections.txt", text);
      out << "wrote " << records.size() << " records to " << (rc.out / "detections.txt").string() << "\n";
    }
    if (decoded == 0) {
      err << "error: no image could be decoded\n";
      return kExitFailure;
    }
    return kExitOk;
  });
}

// ---- bench ----------------------------------------------------------------

std::string machine_description() {
  std::string cpu = "unknown";
  std::ifstream info("/proc/cpuinfo");
  for (std::string line; std::getline(info, line);) {
    if (line.rfind("model name", 0) == 0) {
      cpu = line.substr(line.find(':') + 2);
      break;
    }
  }
  std::string compiler = "unknown";
#if defined(__clang__)
  compiler = format("clang %d.%d", __clang_major__, __clang_minor__);
#elif defined(__GNUC__)
  compiler = format("gcc %d.%d", __GNUC__, __GNUC_MINOR__);
#endif
  return format("cpu=\"%s\" logical_cpus=%u compiler=\"%s\"", cpu.c_str(),
                std::thread::hardware_concurrency(), compiler.c_str());
}

std::vector<BenchSample> run_bench(const RunConfig& rc, std::span<const int> sizes, int iterations) {
  validate(rc);
  if (iterations < 3) throw UsageError("--iterations must be at least 3 (the first is warmup)");
  if (sizes.empty()) throw UsageError("no sizes given");
  for (int s : sizes) {
    if (s < 32 || s % 32 != 0) throw UsageError("bench sizes must be multiples of 32");
  }
  set_num_threads(rc.threads);
  const ModelGraph base = load_graph(rc);
  const ParameterStore params = load_params(rc, base, true);

  RandomSource rng(rc.seed);
  Tensor image(Shape{1, 3, 480, 640});
  for (float& v : image.data()) v = static_cast<float>(rng.uniform());
  const PostprocessOptions opts = post_options(rc);

  std::vector<BenchSample> report;
  for (int size : sizes) {
    const Network net(with_input_size(base, size), params);
    BenchSample sample;
    sample.size = size;
    sample.threads = rc.threads;
    for (int it = 0; it < iterations; ++it) {
      const auto t0 = std::chrono::steady_clock::now();
      const auto [boxed, meta] = letterbox(image, size);
      const auto heads = net.forward(boxed);
      const auto dets = postprocess(heads, 0, net.head(), meta, opts);
      const auto t1 = std::chrono::steady_clock::now();
      if (it == 0) continue;
      sample.latencies_ms.push_back(std::chrono::duration<double, std::milli>(t1 - t0).count());
    }
    const double n = static_cast<double>(sample.latencies_ms.size());
    sample.mean_ms = std::accumulate(sample.latencies_ms.begin(), sample.latencies_ms.end(), 0.0) / n;
    double ss = 0;
    for (double v : sample.latencies_ms) ss += (v - sample.mean_ms) * (v - sample.mean_ms);
    sample.std_ms = std::sqrt(ss / (n - 1));
    sample.fps = 1000.0 / sample.mean_ms;
    report.push_back(std::move(sample));
  }
  return report;
}

int cmd_bench(const RunConfig& rc, std::span<const int> sizes, int iterations, std::ostream& out,
              std::ostream& err) {
  return guarded(err, [&] {
    const auto report = run_bench(rc, sizes, iterations);
    out << "machine: " << machine_description() << "\n";
    for (const BenchSample& s : report) {
      out << format("size=%d threads=%d samples=%zu mean_ms=%.3f std_ms=%.3f fps=%.3f\n", s.size,
                    s.threads, s.latencies_ms.size(), s.mean_ms, s.std_ms, s.fps);
    }
    return kExitOk;
  });
}

// ---- eval -----------------------------------------------------------------

int cmd_eval(const RunConfig& rc, const fs::path& manifest,
             const std::optional<fs::path>& detections, std::ostream& out, std::ostream& err) {
  return guarded(err, [&] {
    validate(rc);
    if (!fs::exists(manifest)) throw UsageError("manifest not found: " + manifest.string());
    const auto entries = load_manifest(manifest);
    if (entries.empty()) throw UsageError("no images");

    std::vector<std::string> missing;
    for (const ManifestEntry& e : entries) {
      if (!detections && !fs::exists(e.image)) missing.push_back(e.image.string());
      if (!fs::exists(e.labels)) missing.push_back(e.labels.string());
    }
    if (!missing.empty()) {
      err << "error: " << missing.size() << " missing file(s):\n";
      for (const auto& m : missing) err << "  " << m << "\n";
      return kExitFailure;
    }

    std::vector<ImageGroundTruth> gts;
    for (std::size_t i = 0; i < entries.size(); ++i) {
      for (const LabeledBox& lb : load_labels(entries[i].labels)) gts.push_back({static_cast<int>(i), lb});
    }

    std::vector<ImageDetection> dets;
    int num_classes = 0;
    if (detections) {
      std::ifstream f(*detections);
      if (!f) throw Error("cannot open " + detections->string());
      int line_no = 0;
      for (std::string line; std::getline(f, line);) {
        ++line_no;
        if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
        DetectionRecord r;
        try {
          r = parse_record(line);
        } catch (const ParseError& e) {
          throw ParseError(line_no, detections->string() + ": " + e.what());
        }
        dets.push_back({r.image, {{double(r.x1), double(r.y1), double(r.x2), double(r.y2)}, r.class_id, r.score}});
      }
      if (!rc.config.empty()) num_classes = HeadConfig::from_graph(load_graph(rc)).num_classes;
    } else {
      set_num_threads(rc.threads);
      const ModelGraph g = load_graph(rc);
      const Network net(g, load_params(rc, g, false));
      num_classes = net.head().num_classes;
      for (std::size_t i = 0; i < entries.size(); ++i) {
        const auto [boxed, meta] = letterbox(decode_image(entries[i].image), input_size(g));
        const auto heads = net.forward(boxed);
        for (const Detection& d : postprocess(heads, 0, net.head(), meta, post_options(rc))) {
          dets.push_back({static_cast<int>(i), d});
        }
      }
    }
    if (num_classes == 0) {
      for (const auto& g : gts) num_classes = std::max(num_classes, g.label.class_id + 1);
      for (const auto& d : dets) num_classes = std::max(num_classes, d.det.class_id + 1);
    }

    const EvalResult r = coco_ap(dets, gts, num_classes);
    out << "images=" << entries.size() << " detections=" << dets.size()
        << " ground_truth=" << gts.size() << " classes=" << num_classes << "\n";
    out << "AP=" << fixed6(r.ap) << "\n";
    out << "AP50=" << fixed6(r.ap50) << "\n";
    out << "AP75=" << fixed6(r.ap75) << "\n";
    out << "AP_S=" << fixed6(r.ap_s) << "\n";
    out << "AP_M=" << fixed6(r.ap_m) << "\n";
    out << "AP_L=" << fixed6(r.ap_l) << "\n";
    for (const ClassAp& c : r.per_class) {
      if (c.num_gt == 0) continue;
      out << "class " << c.class_id << " gt=" << c.num_gt << " AP=" << fixed6(c.ap)
          << " AP50=" << fixed6(c.ap50) << "\n";
    }
    return kExitOk;
  });
}

// ---- augment-preview -------------------------------------------------------

const std::vector<std::string>& augment_ops() {
  static const std::vector<std::string> ops{"hflip",    "scale",    "crop",  "photometric",
                                            "cutout",   "gridmask", "mixup", "cutmix",
                                            "mosaic"};
  return ops;
}

namespace {

// Bilinear resize to exactly w x h with boxes scaled along.
LabeledImage fit_to(const LabeledImage& item, int w, int h) {
  if (item.width() == w && item.height() == h) return item;
  const double fx = static_cast<double>(w) / item.width();
  const double fy = static_cast<double>(h) / item.height();
  LabeledImage out{resize_bilinear(item.image, w, h), item.boxes};
  for (LabeledBox& lb : out.boxes) lb.box = {lb.box.x1 * fx, lb.box.y1 * fy, lb.box.x2 * fx, lb.box.y2 * fy};
  out.boxes = clip_boxes(out.boxes, {0, 0, double(w), double(h)});
  return out;
}

LabeledImage apply_op(const std::string& op, std::span<const LabeledImage> items, std::size_t k,
                      int canvas, RandomSource& rng) {
  const std::size_t n = items.size();
  const LabeledImage& a = items[k % n];
  if (op == "hflip") return geometric(a, GeometricOp::hflip());
  if (op == "scale") return geometric(a, GeometricOp::scaled(rng.uniform(0.5, 1.5)));
  if (op == "crop") return random_geometric(a, {0.0, 1.0, 1.0, 0.6}, rng);
  if (op == "photometric") return photometric(a, 0.2, 0.3, 0.05, rng);
  if (op == "cutout") return cutout(a, 3, std::max(1, std::min(a.width(), a.height()) / 4), rng);
  if (op == "gridmask") {
    return grid_mask(a, std::max(2, std::min(a.width(), a.height()) / 8), 0.5, rng);
  }
  const LabeledImage b = fit_to(items[(k + 1) % n], a.width(), a.height());
  if (op == "mixup") return mixup(a, b, rng.uniform(0.3, 0.7));
  if (op == "cutmix") return cutmix(a, b, random_cutmix_rect(a.width(), a.height(), 0.2, 0.5, rng));
  std::vector<LabeledImage> four;
  for (std::size_t q = 0; q < 4; ++q) four.push_back(items[(k + q) % n]);
  return mosaic4(four, canvas, {}, rng).item;
}

}  // namespace

int cmd_augment_preview(const RunConfig& rc, const fs::path& manifest, const std::string& op,
                        int count, std::ostream& out, std::ostream& err) {
  return guarded(err, [&] {
    validate(rc);
    const auto& ops = augment_ops();
    if (std::find(ops.begin(), ops.end(), op) == ops.end()) {
      std::string valid;
      for (const auto& o : ops) valid += (valid.empty() ? "" : ", ") + o;
      throw UsageError("unknown op '" + op + "'; valid ops: " + valid);
    }
    if (count < 1) throw UsageError("--count must be at least 1");
    if (!fs::exists(manifest)) throw UsageError("manifest not found: " + manifest.string());
    const auto entries = load_manifest(manifest);
    if (entries.empty()) throw UsageError("no images");

    std::vector<LabeledImage> items;
    for (const ManifestEntry& e : entries) {
      LabeledImage item{decode_image(e.image), load_labels(e.labels)};
      item.boxes = clip_boxes(item.boxes, {0, 0, double(item.width()), double(item.height())});
      items.push_back(std::move(item));
    }
    const fs::path dir = rc.out.empty() ? fs::path(".") : rc.out;
    fs::create_directories(dir);
    const int canvas = rc.size != 0 ? rc.size : 416;
    for (int k = 0; k < count; ++k) {
      RandomSource rng = RandomSource::for_worker(rc.seed, static_cast<std::uint64_t>(k));
      const LabeledImage res = apply_op(op, items, static_cast<std::size_t>(k), canvas, rng);
      const std::string stem = format("%s_%03d", op.c_str(), k);
      encode_image(res.image, dir / (stem + ".ppm"));
      write_file(dir / (stem + ".txt"), format_labels(res.boxes));
      out << format("%s %dx%d boxes=%zu\n", (dir / (stem + ".ppm")).string().c_str(), res.width(),
                    res.height(), res.boxes.size());
    }
    return kExitOk;
  });
}

// ---- init-weights -----------------------------------------------------------

int cmd_init_weights(const RunConfig& rc, const fs::path& dest, std::ostream& out,
                     std::ostream& err) {
  return guarded(err, [&] {
    validate(rc);
    const ModelGraph g = load_graph(rc);
    const ParameterStore store = random_parameters(g, rc.seed);
    save_weights_file(g, store, dest.string());
    out << "wrote " << store.scalar_count() << " parameters to " << dest.string() << "\n";
    return kExitOk;
  });
}

}  // namespace yolo4::cli
