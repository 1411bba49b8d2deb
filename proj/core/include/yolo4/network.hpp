#pragma once

#include <array>
#include <cstdint>
#include <span>
#include <vector>

#include "yolo4/model_config.hpp"
#include "yolo4/tensor.hpp"
#include "yolo4/weights.hpp"

namespace yolo4 {

struct CspBlockConfig {
  int channels = 0;
  int n_bottlenecks = 1;
};

/// Anchors and strides for the three detection scales, finest first.
struct HeadConfig {
  int num_classes = 80;
  std::array<std::array<AnchorBox, 3>, 3> anchors{};
  std::array<int, 3> strides{8, 16, 32};

  int channels() const noexcept { return 3 * (5 + num_classes); }

  /// Reads classes and anchors from the graph's yolo_head layers.
  static HeadConfig from_graph(const ModelGraph& g);
};

/// conv -> optional batch norm -> activation.
Tensor conv_unit_forward(const Tensor& x, const ConvUnit& unit);

/// Cross-stage-partial block. `units` follows the LayerParams storage order:
/// route_a, route_b, (reduce 1x1, conv 3x3) per bottleneck, transition.
Tensor csp_block_forward(const Tensor& x, const CspBlockConfig& cfg, std::span<const ConvUnit> units);

inline constexpr std::array<int, 4> kSppKernels{1, 5, 9, 13};

/// Same-size max pools (k = 1, 5, 9, 13) concatenated along channels.
Tensor spp_pool_concat(const Tensor& x);

/// spp_pool_concat followed by the 1x1 transition convolution.
Tensor spp_forward(const Tensor& x, const ConvUnit& transition);

/// x * sigmoid(conv1x1(x)). The unit's own activation is ignored.
Tensor sam_forward(const Tensor& x, const ConvUnit& attention);

/// Path-aggregation neck weights. Stacks alternate 1x1 and 3x3 convolutions.
struct PanParams {
  ConvUnit reduce5, lateral4;
  std::array<ConvUnit, 5> stack4;
  ConvUnit reduce4, lateral3;
  std::array<ConvUnit, 5> stack3;
  ConvUnit down3;
  std::array<ConvUnit, 5> stack_b4;
  ConvUnit down4;
  std::array<ConvUnit, 5> stack_b5;

  std::int64_t scalar_count() const noexcept;
};

/// Neck weights for backbone widths (c3, c4, c5); leaky activations.
PanParams random_pan_params(int c3, int c4, int c5, std::uint64_t seed);

struct PanFeatures {
  Tensor p3, p4, p5;
};

struct PanOutputs {
  Tensor n3, n4, n5;
};

/// Top-down then bottom-up fusion; every merge is a channel concatenation.
PanOutputs pan_forward(const PanFeatures& features, const PanParams& params);

/// Executable model. Batch-norm is folded into the convolutions at
/// construction unless fold_batchnorm is false. forward() is const and may be
/// called from several threads on the same instance.
class Network {
 public:
  Network(ModelGraph graph, const ParameterStore& params, bool fold_batchnorm = true);

  const ModelGraph& graph() const noexcept { return graph_; }
  const HeadConfig& head() const noexcept { return head_; }

  /// Raw head tensors, finest scale first: (n, 3*(5+classes), S/8, S/8), ...
  std::vector<Tensor> forward(const Tensor& images) const;

 private:
  ModelGraph graph_;
  HeadConfig head_;
  std::vector<LayerParams> layers_;
  std::vector<int> last_use_;
};

inline std::vector<Tensor> model_forward(const Tensor& images, const Network& net) {
  return net.forward(images);
}

}  // namespace yolo4
