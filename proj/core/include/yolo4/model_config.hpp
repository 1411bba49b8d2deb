#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "yolo4/ops.hpp"

namespace yolo4 {

enum class LayerKind { input, conv, csp_block, spp, maxpool, upsample, concat, sam, yolo_head };

std::string_view to_string(LayerKind kind) noexcept;
std::optional<LayerKind> parse_layer_kind(std::string_view text) noexcept;

/// Per-layer activation spelled as in config files.
std::string_view to_string(ActivationKind kind) noexcept;

struct AnchorBox {
  float width = 0;
  float height = 0;
  friend bool operator==(const AnchorBox&, const AnchorBox&) = default;
};

/// One declared layer. Fields that do not apply to `kind` keep their
/// defaults and are neither parsed nor serialized for it.
struct LayerSpec {
  std::string name;
  LayerKind kind = LayerKind::conv;
  std::vector<std::string> from;  // producer names; empty means "previous layer"
  std::string group;              // free-form tag, e.g. "backbone"

  int channels = 0;  // input
  int width = 0;     // input
  int height = 0;    // input
  int filters = 0;   // conv, csp_block, spp
  int size = 0;      // conv, maxpool kernel
  int stride = 1;    // conv, maxpool, upsample
  int repeat = 0;    // csp_block bottleneck count
  bool batch_normalize = true;  // conv
  Activation activation{};
  int classes = 0;                 // yolo_head
  std::vector<AnchorBox> anchors;  // yolo_head

  int line = 0;  // declaration line; not part of equality

  friend bool operator==(const LayerSpec& a, const LayerSpec& b) {
    return a.name == b.name && a.kind == b.kind && a.from == b.from && a.group == b.group &&
           a.channels == b.channels && a.width == b.width && a.height == b.height &&
           a.filters == b.filters && a.size == b.size && a.stride == b.stride &&
           a.repeat == b.repeat && a.batch_normalize == b.batch_normalize &&
           a.activation == b.activation && a.classes == b.classes && a.anchors == b.anchors;
  }
};

/// Channel/height/width of one layer output (batch excluded).
struct FeatureShape {
  int c = 0;
  int h = 0;
  int w = 0;
  friend bool operator==(const FeatureShape&, const FeatureShape&) = default;
};

/// Validated layer DAG in evaluation order.
struct ModelGraph {
  std::vector<LayerSpec> layers;
  std::vector<std::vector<int>> inputs;   // producer indices per layer
  std::vector<std::pair<int, int>> edges;  // producer -> consumer
  std::vector<FeatureShape> shapes;       // inferred output shape per layer
  std::int64_t param_count = 0;

  int find(std::string_view name) const noexcept;
  const FeatureShape& input_shape() const { return shapes.at(0); }

  /// yolo_head layer indices ordered by ascending stride.
  std::vector<int> head_layers() const;

  friend bool operator==(const ModelGraph& a, const ModelGraph& b) {
    return a.layers == b.layers && a.inputs == b.inputs && a.edges == b.edges &&
           a.shapes == b.shapes && a.param_count == b.param_count;
  }
};

/// Parses and validates a model description (see README for the grammar).
/// Shapes are inferred from the declared input size.
ModelGraph parse_model_config(std::string_view text);
ModelGraph load_model_config(const std::string& path);

/// Canonical text form; parse_model_config(serialize_model_config(g)) == g.
std::string serialize_model_config(const ModelGraph& g);

/// Output shapes for an input of (c, h, w). h and w must be multiples of 32.
std::vector<FeatureShape> infer_shapes(const ModelGraph& g, FeatureShape input);

/// Same graph with every shape re-inferred for a new square input size.
ModelGraph with_input_size(const ModelGraph& g, int size);

/// Learnable scalars of one layer given its input channel count.
std::int64_t layer_param_count(const LayerSpec& layer, int in_channels);

std::int64_t count_params(const ModelGraph& g);

/// Parameters of layers whose group tag equals `group`.
std::int64_t count_params(const ModelGraph& g, std::string_view group);

}  // namespace yolo4
