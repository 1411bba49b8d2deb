#include <benchmark/benchmark.h>

#include <filesystem>
#include <vector>

#include "yolo4/box.hpp"
#include "yolo4/network.hpp"
#include "yolo4/ops.hpp"
#include "yolo4/postprocess.hpp"
#include "yolo4/rng.hpp"
#include "yolo4/weights.hpp"

using namespace yolo4;

namespace {

Tensor filled(Shape s, std::uint64_t seed) {
  RandomSource rng(seed);
  Tensor t(s);
  for (float& v : t.data()) v = static_cast<float>(rng.uniform(-1, 1));
  return t;
}

void BM_Gemm(benchmark::State& state) {
  const int n = static_cast<int>(state.range(0));
  const Tensor a = filled({1, 1, n, n}, 1);
  const Tensor b = filled({1, 1, n, n}, 2);
  std::vector<float> c(static_cast<std::size_t>(n) * n);
  for (auto _ : state) {
    gemm(n, n, n, a.data().data(), n, b.data().data(), n, c.data(), n);
    benchmark::DoNotOptimize(c.data());
  }
  state.counters["GFLOPS"] = benchmark::Counter(2.0 * n * n * n, benchmark::Counter::kIsIterationInvariantRate,
                                                benchmark::Counter::kIs1000);
}
BENCHMARK(BM_Gemm)->Arg(128)->Arg(256)->Arg(512);

void BM_Conv3x3(benchmark::State& state) {
  const int ch = static_cast<int>(state.range(0));
  const int extent = static_cast<int>(state.range(1));
  const Tensor x = filled({1, ch, extent, extent}, 3);
  ConvParams p = ConvParams::zeros(ch, ch, 3, 1, 1);
  RandomSource rng(4);
  for (float& w : p.weights) w = static_cast<float>(rng.uniform(-0.1, 0.1));
  for (auto _ : state) benchmark::DoNotOptimize(conv2d(x, p));
  state.counters["GFLOPS"] = benchmark::Counter(2.0 * ch * ch * 9 * extent * extent,
                                                benchmark::Counter::kIsIterationInvariantRate,
                                                benchmark::Counter::kIs1000);
}
BENCHMARK(BM_Conv3x3)->Args({64, 76})->Args({256, 38})->Args({512, 19})->Unit(benchmark::kMillisecond);

void BM_Ciou(benchmark::State& state) {
  RandomSource rng(5);
  std::vector<BBox> boxes;
  for (int i = 0; i < 1024; ++i) {
    const double x = rng.uniform(0, 100), y = rng.uniform(0, 100);
    boxes.push_back({x, y, x + rng.uniform(1, 50), y + rng.uniform(1, 50)});
  }
  std::size_t i = 0;
  for (auto _ : state) {
    benchmark::DoNotOptimize(ciou(boxes[i & 1023], boxes[(i + 7) & 1023]));
    ++i;
  }
}
BENCHMARK(BM_Ciou);

void BM_Nms(benchmark::State& state) {
  RandomSource rng(6);
  std::vector<Detection> dets;
  for (int i = 0; i < state.range(0); ++i) {
    const double x = rng.uniform(0, 600), y = rng.uniform(0, 600);
    dets.push_back({{x, y, x + rng.uniform(10, 120), y + rng.uniform(10, 120)}, rng.uniform_int(0, 79),
                    rng.uniform()});
  }
  for (auto _ : state) benchmark::DoNotOptimize(nms(dets, 0.45, NmsCriterion::diou));
}
BENCHMARK(BM_Nms)->Arg(100)->Arg(1000)->Arg(10000);

void BM_SlimForward(benchmark::State& state) {
  const auto cfg = std::filesystem::path(YOLO4_SOURCE_DIR) / "tests" / "data" / "yolov4-slim.cfg";
  const ModelGraph g = with_input_size(load_model_config(cfg.string()), static_cast<int>(state.range(0)));
  const Network net(g, random_parameters(g, 7));
  const Tensor x = filled({1, 3, g.input_shape().h, g.input_shape().w}, 8);
  for (auto _ : state) benchmark::DoNotOptimize(net.forward(x));
}
BENCHMARK(BM_SlimForward)->Arg(256)->Arg(416)->Unit(benchmark::kMillisecond);

}  // namespace

BENCHMARK_MAIN();
