#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "yolo4/model_config.hpp"
#include "yolo4/ops.hpp"

namespace yolo4 {

/// File header. images_seen is stored as 64 bits when major*10 + minor >= 2,
/// otherwise as 32 bits.
struct WeightsHeader {
  std::int32_t major = 0;
  std::int32_t minor = 2;
  std::int32_t revision = 0;
  std::uint64_t images_seen = 0;

  bool wide_counter() const noexcept { return major * 10 + minor >= 2; }
  std::size_t byte_size() const noexcept { return 12 + (wide_counter() ? 8 : 4); }

  friend bool operator==(const WeightsHeader&, const WeightsHeader&) = default;
};

/// Parsed weights file: header plus the raw float payload.
struct WeightsBlob {
  WeightsHeader header;
  std::vector<float> payload;
};

WeightsBlob parse_weights_blob(std::span<const std::uint8_t> bytes);
std::vector<std::uint8_t> serialize_weights_blob(const WeightsBlob& blob);

/// One convolution with its optional batch norm and activation.
struct ConvUnit {
  ConvParams conv;
  std::optional<BatchNormParams> bn;
  Activation activation{};

  /// Scalars stored in a weights file for this unit.
  std::size_t stored_count() const noexcept;
};

/// Learnable parameters of one layer, in storage order:
///   conv      -> [conv]
///   csp_block -> [route_a, route_b, (reduce, conv3x3) x repeat, transition]
///   spp       -> [transition]
///   sam       -> [attention conv]
struct LayerParams {
  std::vector<ConvUnit> units;
};

/// Parameters bound to a ModelGraph, one entry per layer.
struct ParameterStore {
  WeightsHeader header;
  std::vector<LayerParams> layers;

  std::int64_t scalar_count() const noexcept;
};

/// Allocates zero-valued parameters (identity batch norm) shaped for g.
ParameterStore make_parameter_store(const ModelGraph& g);

/// Fills a store with deterministic pseudo-random values suitable for smoke
/// runs and benchmarks. Conv weights are uniform with variance 1 / fan_in.
/// Convs feeding a yolo_head get an objectness bias of logit(0.01), so an
/// untrained model emits few boxes at ordinary thresholds.
ParameterStore random_parameters(const ModelGraph& g, std::uint64_t seed);

/// Binds a weights file to g. Per unit with batch norm the order is beta,
/// gamma, running_mean, running_var, weights; without batch norm it is bias,
/// weights. The payload must be consumed exactly.
ParameterStore load_weights(const ModelGraph& g, std::span<const std::uint8_t> bytes);
ParameterStore load_weights_file(const ModelGraph& g, const std::string& path);

std::vector<std::uint8_t> save_weights(const ModelGraph& g, const ParameterStore& store);
void save_weights_file(const ModelGraph& g, const ParameterStore& store, const std::string& path);

}  // namespace yolo4
