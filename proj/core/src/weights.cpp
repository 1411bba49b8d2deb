#include "yolo4/weights.hpp"

#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <iterator>

#include "yolo4/error.hpp"
#include "yolo4/rng.hpp"

namespace yolo4 {

namespace {

std::uint32_t read_u32(const std::uint8_t* p) {
  return static_cast<std::uint32_t>(p[0]) | (static_cast<std::uint32_t>(p[1]) << 8) |
         (static_cast<std::uint32_t>(p[2]) << 16) | (static_cast<std::uint32_t>(p[3]) << 24);
}

void write_u32(std::vector<std::uint8_t>& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

WeightsHeader read_header(std::span<const std::uint8_t> bytes) {
  if (bytes.size() < 12) throw WeightsError("weights file shorter than its header");
  WeightsHeader h;
  h.major = static_cast<std::int32_t>(read_u32(bytes.data()));
  h.minor = static_cast<std::int32_t>(read_u32(bytes.data() + 4));
  h.revision = static_cast<std::int32_t>(read_u32(bytes.data() + 8));
  if (h.major < 0 || h.major > 2) {
    throw WeightsError("unsupported weights major version " + std::to_string(h.major));
  }
  if (bytes.size() < h.byte_size()) throw WeightsError("weights file shorter than its header");
  if (h.wide_counter()) {
    h.images_seen = static_cast<std::uint64_t>(read_u32(bytes.data() + 12)) |
                    (static_cast<std::uint64_t>(read_u32(bytes.data() + 16)) << 32);
  } else {
    h.images_seen = read_u32(bytes.data() + 12);
  }
  return h;
}

void write_header(std::vector<std::uint8_t>& out, const WeightsHeader& h) {
  write_u32(out, static_cast<std::uint32_t>(h.major));
  write_u32(out, static_cast<std::uint32_t>(h.minor));
  write_u32(out, static_cast<std::uint32_t>(h.revision));
  write_u32(out, static_cast<std::uint32_t>(h.images_seen));
  if (h.wide_counter()) write_u32(out, static_cast<std::uint32_t>(h.images_seen >> 32));
}

ConvUnit make_unit(int out, int in, int kernel, int stride, bool bn, Activation act) {
  ConvUnit u;
  u.conv = ConvParams::zeros(out, in, kernel, stride, kernel / 2);
  if (bn) u.bn = BatchNormParams::identity(out);
  u.activation = act;
  return u;
}

LayerParams make_layer(const LayerSpec& L, int in_channels) {
  LayerParams lp;
  switch (L.kind) {
    case LayerKind::conv:
      lp.units.push_back(
          make_unit(L.filters, in_channels, L.size, L.stride, L.batch_normalize, L.activation));
      break;
    case LayerKind::csp_block: {
      const int c = L.filters;
      const int h = c / 2;
      lp.units.push_back(make_unit(h, c, 1, 1, true, L.activation));
      lp.units.push_back(make_unit(h, c, 1, 1, true, L.activation));
      for (int i = 0; i < L.repeat; ++i) {
        lp.units.push_back(make_unit(h, h, 1, 1, true, L.activation));
        lp.units.push_back(make_unit(h, h, 3, 1, true, L.activation));
      }
      lp.units.push_back(make_unit(c, 2 * h, 1, 1, true, L.activation));
      break;
    }
    case LayerKind::spp:
      lp.units.push_back(make_unit(L.filters, 4 * in_channels, 1, 1, true, L.activation));
      break;
    case LayerKind::sam:
      lp.units.push_back(
          make_unit(in_channels, in_channels, 1, 1, false, {ActivationKind::sigmoid}));
      break;
    default:
      break;
  }
  return lp;
}

// Visits every stored scalar of a unit in file order.
template <typename Unit, typename Fn>
void for_each_stored(Unit& u, Fn&& fn) {
  if (u.bn) {
    for (auto& v : u.bn->beta) fn(v);
    for (auto& v : u.bn->gamma) fn(v);
    for (auto& v : u.bn->running_mean) fn(v);
    for (auto& v : u.bn->running_var) fn(v);
  } else {
    for (auto& v : u.conv.bias) fn(v);
  }
  for (auto& v : u.conv.weights) fn(v);
}

std::vector<std::uint8_t> read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw WeightsError("cannot open weights file '" + path + "'");
  return std::vector<std::uint8_t>(std::istreambuf_iterator<char>(in), {});
}

}  // namespace

WeightsBlob parse_weights_blob(std::span<const std::uint8_t> bytes) {
  WeightsBlob blob;
  blob.header = read_header(bytes);
  const auto body = bytes.subspan(blob.header.byte_size());
  if (body.size() % 4 != 0) throw WeightsError("weights payload is not a whole number of floats");
  blob.payload.resize(body.size() / 4);
  for (std::size_t i = 0; i < blob.payload.size(); ++i) {
    blob.payload[i] = std::bit_cast<float>(read_u32(body.data() + 4 * i));
  }
  return blob;
}

std::vector<std::uint8_t> serialize_weights_blob(const WeightsBlob& blob) {
  std::vector<std::uint8_t> out;
  out.reserve(blob.header.byte_size() + 4 * blob.payload.size());
  write_header(out, blob.header);
  for (float v : blob.payload) write_u32(out, std::bit_cast<std::uint32_t>(v));
  return out;
}

std::size_t ConvUnit::stored_count() const noexcept {
  return conv.weights.size() + (bn ? 4 * static_cast<std::size_t>(conv.out_ch) : conv.bias.size());
}

std::int64_t ParameterStore::scalar_count() const noexcept {
  std::int64_t total = 0;
  for (const auto& layer : layers) {
    for (const auto& unit : layer.units) total += static_cast<std::int64_t>(unit.stored_count());
  }
  return total;
}

ParameterStore make_parameter_store(const ModelGraph& g) {
  ParameterStore store;
  store.layers.resize(g.layers.size());
  for (std::size_t i = 1; i < g.layers.size(); ++i) {
    store.layers[i] = make_layer(g.layers[i], g.shapes.at(g.inputs[i].front()).c);
  }
  return store;
}

ParameterStore random_parameters(const ModelGraph& g, std::uint64_t seed) {
  constexpr double kObjectnessPrior = 0.01;
  ParameterStore store = make_parameter_store(g);
  RandomSource rng(seed);
  for (auto& layer : store.layers) {
    for (auto& u : layer.units) {
      const double fan_in = static_cast<double>(u.conv.in_ch) * u.conv.kernel * u.conv.kernel;
      const double bound = std::sqrt(3.0 / fan_in);
      for (float& w : u.conv.weights) w = static_cast<float>(rng.uniform(-bound, bound));
      if (u.bn) {
        for (float& v : u.bn->gamma) v = static_cast<float>(rng.uniform(0.8, 1.2));
        for (float& v : u.bn->beta) v = static_cast<float>(rng.uniform(-0.1, 0.1));
        for (float& v : u.bn->running_mean) v = static_cast<float>(rng.uniform(-0.1, 0.1));
        for (float& v : u.bn->running_var) v = static_cast<float>(rng.uniform(0.8, 1.2));
      } else {
        for (float& v : u.conv.bias) v = static_cast<float>(rng.uniform(-0.1, 0.1));
      }
    }
  }
  const float prior = static_cast<float>(std::log(kObjectnessPrior / (1.0 - kObjectnessPrior)));
  for (std::size_t i = 0; i < g.layers.size(); ++i) {
    const LayerSpec& head = g.layers[i];
    if (head.kind != LayerKind::yolo_head) continue;
    for (int producer : g.inputs[i]) {
      auto& units = store.layers[static_cast<std::size_t>(producer)].units;
      if (g.layers[static_cast<std::size_t>(producer)].kind != LayerKind::conv || units.empty()) continue;
      auto& bias = units.back().conv.bias;
      const std::size_t per_anchor = 5 + static_cast<std::size_t>(head.classes);
      for (std::size_t c = 4; c < bias.size(); c += per_anchor) bias[c] = prior;
    }
  }
  return store;
}

ParameterStore load_weights(const ModelGraph& g, std::span<const std::uint8_t> bytes) {
  ParameterStore store = make_parameter_store(g);
  store.header = read_header(bytes);
  const auto body = bytes.subspan(store.header.byte_size());
  std::size_t offset = 0;
  for (std::size_t i = 0; i < store.layers.size(); ++i) {
    for (auto& unit : store.layers[i].units) {
      const std::size_t need = 4 * unit.stored_count();
      if (body.size() - offset < need) {
        throw WeightsError("weights truncated at layer '" + g.layers[i].name + "': needs " +
                           std::to_string(need) + " bytes, " +
                           std::to_string(body.size() - offset) + " remain");
      }
      for_each_stored(unit, [&](float& v) {
        v = std::bit_cast<float>(read_u32(body.data() + offset));
        offset += 4;
      });
    }
  }
  if (offset != body.size()) {
    throw WeightsError("weights file has " + std::to_string(body.size() - offset) +
                       " surplus bytes after the last layer");
  }
  return store;
}

ParameterStore load_weights_file(const ModelGraph& g, const std::string& path) {
  const auto bytes = read_file(path);
  return load_weights(g, bytes);
}

std::vector<std::uint8_t> save_weights(const ModelGraph& g, const ParameterStore& store) {
  if (store.layers.size() != g.layers.size()) {
    throw WeightsError("parameter store does not match the model graph");
  }
  std::vector<std::uint8_t> out;
  out.reserve(store.header.byte_size() + 4 * static_cast<std::size_t>(store.scalar_count()));
  write_header(out, store.header);
  for (const auto& layer : store.layers) {
    for (const auto& unit : layer.units) {
      for_each_stored(unit, [&](float v) { write_u32(out, std::bit_cast<std::uint32_t>(v)); });
    }
  }
  return out;
}

void save_weights_file(const ModelGraph& g, const ParameterStore& store, const std::string& path) {
  const auto bytes = save_weights(g, store);
  std::ofstream out(path, std::ios::binary);
  if (!out) throw WeightsError("cannot write weights file '" + path + "'");
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
}

}  // namespace yolo4
