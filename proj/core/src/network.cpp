#include "yolo4/network.hpp"

#include <algorithm>
#include <cmath>
#include <optional>

#include "yolo4/error.hpp"
#include "yolo4/rng.hpp"

namespace yolo4 {

HeadConfig HeadConfig::from_graph(const ModelGraph& g) {
  const auto heads = g.head_layers();
  if (heads.size() != 3) {
    throw Error("model must declare exactly 3 yolo_head layers, found " +
                std::to_string(heads.size()));
  }
  HeadConfig cfg;
  cfg.num_classes = g.layers[heads[0]].classes;
  for (std::size_t s = 0; s < 3; ++s) {
    const LayerSpec& L = g.layers[heads[s]];
    if (L.classes != cfg.num_classes) throw Error("yolo_head layers disagree on class count");
    for (std::size_t a = 0; a < 3; ++a) cfg.anchors[s][a] = L.anchors[a];
    cfg.strides[s] = g.input_shape().h / g.shapes[heads[s]].h;
  }
  return cfg;
}

Tensor conv_unit_forward(const Tensor& x, const ConvUnit& unit) {
  Tensor y = conv2d(x, unit.conv);
  if (unit.bn) batchnorm_inplace(y, *unit.bn);
  activate_inplace(y, unit.activation);
  return y;
}

Tensor csp_block_forward(const Tensor& x, const CspBlockConfig& cfg,
                         std::span<const ConvUnit> units) {
  if (cfg.channels < 2 || cfg.channels % 2 != 0) {
    throw DimensionError("c", "csp block channel count must be even, got " +
                                  std::to_string(cfg.channels));
  }
  if (x.c() != cfg.channels) {
    throw DimensionError("c", "csp block expects " + std::to_string(cfg.channels) +
                                  " channels, input has " + std::to_string(x.c()));
  }
  const std::size_t expected = 3 + 2 * static_cast<std::size_t>(cfg.n_bottlenecks);
  if (units.size() != expected) {
    throw DimensionError("units", "csp block expects " + std::to_string(expected) +
                                      " convolutions, got " + std::to_string(units.size()));
  }
  const Tensor route_a = conv_unit_forward(x, units[0]);
  Tensor route_b = conv_unit_forward(x, units[1]);
  for (int i = 0; i < cfg.n_bottlenecks; ++i) {
    const Tensor reduced = conv_unit_forward(route_b, units[2 + 2 * i]);
    const Tensor residual = conv_unit_forward(reduced, units[3 + 2 * i]);
    route_b = add(route_b, residual);
  }
  const Tensor merged = concat_channels({&route_a, &route_b});
  return conv_unit_forward(merged, units.back());
}

Tensor spp_pool_concat(const Tensor& x) {
  if (x.h() < 13 || x.w() < 13) {
    throw DimensionError(x.h() < 13 ? "h" : "w",
                         "spp needs spatial extents >= 13, got " + std::to_string(x.h()) + "x" +
                             std::to_string(x.w()));
  }
  std::vector<Tensor> branches;
  branches.reserve(kSppKernels.size());
  for (int k : kSppKernels) branches.push_back(maxpool(x, k, 1, (k - 1) / 2));
  return concat_channels(branches);
}

Tensor spp_forward(const Tensor& x, const ConvUnit& transition) {
  return conv_unit_forward(spp_pool_concat(x), transition);
}

Tensor sam_forward(const Tensor& x, const ConvUnit& attention) {
  Tensor gate = conv2d(x, attention.conv);
  if (attention.bn) batchnorm_inplace(gate, *attention.bn);
  if (gate.shape() != x.shape()) {
    throw DimensionError("c", "attention map shape " + to_string(gate.shape()) +
                                  " differs from input " + to_string(x.shape()));
  }
  auto g = gate.data();
  const auto v = x.data();
  for (std::size_t i = 0; i < g.size(); ++i) g[i] = v[i] * sigmoid(g[i]);
  return gate;
}

namespace {

ConvUnit random_unit(RandomSource& rng, int out, int in, int kernel, int stride) {
  ConvUnit u;
  u.conv = ConvParams::zeros(out, in, kernel, stride, kernel / 2);
  const double scale = 1.0 / std::sqrt(static_cast<double>(in) * kernel * kernel);
  for (float& w : u.conv.weights) w = static_cast<float>(rng.normal() * scale);
  u.bn = BatchNormParams::identity(out);
  for (float& b : u.bn->beta) b = static_cast<float>(rng.uniform(-0.1, 0.1));
  u.activation = {ActivationKind::leaky_relu, 0.1f};
  return u;
}

std::array<ConvUnit, 5> random_stack(RandomSource& rng, int in, int lo, int hi) {
  return {random_unit(rng, lo, in, 1, 1), random_unit(rng, hi, lo, 3, 1),
          random_unit(rng, lo, hi, 1, 1), random_unit(rng, hi, lo, 3, 1),
          random_unit(rng, lo, hi, 1, 1)};
}

Tensor run_stack(Tensor x, const std::array<ConvUnit, 5>& stack) {
  for (const auto& unit : stack) x = conv_unit_forward(x, unit);
  return x;
}

}  // namespace

std::int64_t PanParams::scalar_count() const noexcept {
  std::int64_t total = 0;
  auto add_unit = [&](const ConvUnit& u) { total += static_cast<std::int64_t>(u.stored_count()); };
  for (const ConvUnit* u : {&reduce5, &lateral4, &reduce4, &lateral3, &down3, &down4}) add_unit(*u);
  for (const auto* stack : {&stack4, &stack3, &stack_b4, &stack_b5}) {
    for (const auto& u : *stack) add_unit(u);
  }
  return total;
}

PanParams random_pan_params(int c3, int c4, int c5, std::uint64_t seed) {
  RandomSource rng(seed);
  PanParams p;
  p.reduce5 = random_unit(rng, c4 / 2, c5, 1, 1);
  p.lateral4 = random_unit(rng, c4 / 2, c4, 1, 1);
  p.stack4 = random_stack(rng, c4, c4 / 2, c4);
  p.reduce4 = random_unit(rng, c3 / 2, c4 / 2, 1, 1);
  p.lateral3 = random_unit(rng, c3 / 2, c3, 1, 1);
  p.stack3 = random_stack(rng, c3, c3 / 2, c3);
  p.down3 = random_unit(rng, c4 / 2, c3 / 2, 3, 2);
  p.stack_b4 = random_stack(rng, c4, c4 / 2, c4);
  p.down4 = random_unit(rng, c5, c4 / 2, 3, 2);
  p.stack_b5 = random_stack(rng, 2 * c5, c5, 2 * c5);
  return p;
}

PanOutputs pan_forward(const PanFeatures& f, const PanParams& p) {
  if (f.p4.h() != 2 * f.p5.h() || f.p4.w() != 2 * f.p5.w()) {
    throw DimensionError("h", "P4 grid must be twice the P5 grid");
  }
  if (f.p3.h() != 2 * f.p4.h() || f.p3.w() != 2 * f.p4.w()) {
    throw DimensionError("h", "P3 grid must be twice the P4 grid");
  }
  // Top-down.
  const Tensor up5 = upsample_nearest2x(conv_unit_forward(f.p5, p.reduce5));
  const Tensor lat4 = conv_unit_forward(f.p4, p.lateral4);
  const Tensor td4 = run_stack(concat_channels({&lat4, &up5}), p.stack4);
  const Tensor up4 = upsample_nearest2x(conv_unit_forward(td4, p.reduce4));
  const Tensor lat3 = conv_unit_forward(f.p3, p.lateral3);
  PanOutputs out;
  out.n3 = run_stack(concat_channels({&lat3, &up4}), p.stack3);
  // Bottom-up.
  const Tensor down3 = conv_unit_forward(out.n3, p.down3);
  out.n4 = run_stack(concat_channels({&down3, &td4}), p.stack_b4);
  const Tensor down4 = conv_unit_forward(out.n4, p.down4);
  out.n5 = run_stack(concat_channels({&down4, &f.p5}), p.stack_b5);
  return out;
}

Network::Network(ModelGraph graph, const ParameterStore& params, bool fold)
    : graph_(std::move(graph)), head_(HeadConfig::from_graph(graph_)), layers_(params.layers) {
  if (layers_.size() != graph_.layers.size()) {
    throw WeightsError("parameter store does not match the model graph");
  }
  const ParameterStore reference = make_parameter_store(graph_);
  for (std::size_t i = 0; i < layers_.size(); ++i) {
    if (layers_[i].units.size() != reference.layers[i].units.size()) {
      throw WeightsError("parameters for layer '" + graph_.layers[i].name +
                         "' do not match its declaration");
    }
    for (auto& unit : layers_[i].units) {
      if (fold && unit.bn) {
        unit.conv = fold_batchnorm(unit.conv, *unit.bn);
        unit.bn.reset();
      }
    }
  }
  last_use_.assign(graph_.layers.size(), -1);
  for (const auto& [src, dst] : graph_.edges) last_use_[src] = std::max(last_use_[src], dst);
}

std::vector<Tensor> Network::forward(const Tensor& images) const {
  const FeatureShape& declared = graph_.input_shape();
  if (images.c() != declared.c) {
    throw DimensionError("c", "model expects " + std::to_string(declared.c) +
                                  " input channels, got " + std::to_string(images.c()));
  }
  if (images.h() % 32 != 0 || images.w() % 32 != 0) {
    throw DimensionError("h", "input extents must be divisible by 32, got " +
                                  std::to_string(images.h()) + "x" + std::to_string(images.w()));
  }
  std::vector<std::optional<Tensor>> outputs(graph_.layers.size());
  const auto heads = graph_.head_layers();

  for (std::size_t i = 0; i < graph_.layers.size(); ++i) {
    const LayerSpec& L = graph_.layers[i];
    const auto& units = layers_[i].units;
    const Tensor* in = i == 0 ? &images : &*outputs[graph_.inputs[i].front()];
    switch (L.kind) {
      case LayerKind::input:
        outputs[i] = images;
        break;
      case LayerKind::conv:
        outputs[i] = conv_unit_forward(*in, units.front());
        break;
      case LayerKind::csp_block:
        outputs[i] = csp_block_forward(*in, {L.filters, L.repeat}, units);
        break;
      case LayerKind::spp:
        outputs[i] = spp_forward(*in, units.front());
        break;
      case LayerKind::maxpool:
        outputs[i] = maxpool(*in, L.size, L.stride, (L.size - 1) / 2);
        break;
      case LayerKind::upsample:
        outputs[i] = upsample_nearest2x(*in);
        break;
      case LayerKind::concat: {
        std::vector<const Tensor*> parts;
        for (int src : graph_.inputs[i]) parts.push_back(&*outputs[src]);
        outputs[i] = concat_channels(std::span<const Tensor* const>(parts));
        break;
      }
      case LayerKind::sam:
        outputs[i] = sam_forward(*in, units.front());
        break;
      case LayerKind::yolo_head:
        if (in->c() != head_.channels()) {
          throw DimensionError("c", "head '" + L.name + "' received " + std::to_string(in->c()) +
                                        " channels");
        }
        outputs[i] = *in;
        break;
    }
    for (int src : graph_.inputs[i]) {
      if (last_use_[src] == static_cast<int>(i) &&
          std::find(heads.begin(), heads.end(), src) == heads.end()) {
        outputs[src].reset();
      }
    }
  }
  std::vector<Tensor> raw;
  raw.reserve(heads.size());
  for (int h : heads) raw.push_back(std::move(*outputs[h]));
  return raw;
}

}  // namespace yolo4
