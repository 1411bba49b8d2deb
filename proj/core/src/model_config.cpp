#include "yolo4/model_config.hpp"

#include <algorithm>
#include <charconv>
#include <fstream>
#include <map>
#include <sstream>

#include "yolo4/error.hpp"

namespace yolo4 {

std::string_view to_string(LayerKind kind) noexcept {
  switch (kind) {
    case LayerKind::input: return "input";
    case LayerKind::conv: return "conv";
    case LayerKind::csp_block: return "csp_block";
    case LayerKind::spp: return "spp";
    case LayerKind::maxpool: return "maxpool";
    case LayerKind::upsample: return "upsample";
    case LayerKind::concat: return "concat";
    case LayerKind::sam: return "sam";
    case LayerKind::yolo_head: return "yolo_head";
  }
  return "?";
}

std::optional<LayerKind> parse_layer_kind(std::string_view text) noexcept {
  for (LayerKind k : {LayerKind::input, LayerKind::conv, LayerKind::csp_block, LayerKind::spp,
                      LayerKind::maxpool, LayerKind::upsample, LayerKind::concat, LayerKind::sam,
                      LayerKind::yolo_head}) {
    if (to_string(k) == text) return k;
  }
  return std::nullopt;
}

std::string_view to_string(ActivationKind kind) noexcept {
  switch (kind) {
    case ActivationKind::linear: return "linear";
    case ActivationKind::leaky_relu: return "leaky";
    case ActivationKind::mish: return "mish";
    case ActivationKind::sigmoid: return "logistic";
  }
  return "?";
}

int ModelGraph::find(std::string_view name) const noexcept {
  for (std::size_t i = 0; i < layers.size(); ++i) {
    if (layers[i].name == name) return static_cast<int>(i);
  }
  return -1;
}

std::vector<int> ModelGraph::head_layers() const {
  std::vector<int> heads;
  for (std::size_t i = 0; i < layers.size(); ++i) {
    if (layers[i].kind == LayerKind::yolo_head) heads.push_back(static_cast<int>(i));
  }
  // Larger grid means smaller stride.
  std::stable_sort(heads.begin(), heads.end(),
                   [&](int a, int b) { return shapes.at(a).h > shapes.at(b).h; });
  return heads;
}

namespace {

std::string_view trim(std::string_view s) {
  const auto first = s.find_first_not_of(" \t\r");
  if (first == std::string_view::npos) return {};
  const auto last = s.find_last_not_of(" \t\r");
  return s.substr(first, last - first + 1);
}

std::vector<std::string_view> split_ws(std::string_view s) {
  std::vector<std::string_view> out;
  std::size_t i = 0;
  while (i < s.size()) {
    while (i < s.size() && (s[i] == ' ' || s[i] == '\t')) ++i;
    std::size_t j = i;
    while (j < s.size() && s[j] != ' ' && s[j] != '\t') ++j;
    if (j > i) out.push_back(s.substr(i, j - i));
    i = j;
  }
  return out;
}

std::vector<std::string_view> split_list(std::string_view s) {
  std::vector<std::string_view> out;
  std::size_t i = 0;
  while (i <= s.size()) {
    std::size_t j = s.find_first_of(", \t", i);
    if (j == std::string_view::npos) j = s.size();
    if (j > i) out.push_back(s.substr(i, j - i));
    i = j + 1;
  }
  return out;
}

struct Attr {
  std::string value;
  int line = 0;
};

struct RawLayer {
  std::string name;
  std::string kind;
  int line = 0;
  std::map<std::string, Attr> attrs;
};

class AttrReader {
 public:
  AttrReader(RawLayer& raw) : raw_(raw) {}

  bool has(const std::string& key) const { return raw_.attrs.count(key) > 0; }

  const Attr& require(const std::string& key) {
    auto it = raw_.attrs.find(key);
    if (it == raw_.attrs.end()) {
      throw ParseError(raw_.line, "layer '" + raw_.name + "' (" + raw_.kind +
                                      ") is missing required attribute '" + key + "'");
    }
    used_.push_back(key);
    return it->second;
  }

  int get_int(const std::string& key) { return to_int(require(key)); }

  int get_int(const std::string& key, int fallback) {
    return has(key) ? get_int(key) : fallback;
  }

  float get_float(const std::string& key, float fallback) {
    if (!has(key)) return fallback;
    const Attr& a = require(key);
    return to_float(a.value, a.line);
  }

  std::string get_string(const std::string& key, const std::string& fallback) {
    return has(key) ? require(key).value : fallback;
  }

  static int to_int(const Attr& a) {
    int v = 0;
    const char* end = a.value.data() + a.value.size();
    auto [ptr, ec] = std::from_chars(a.value.data(), end, v);
    if (ec != std::errc{} || ptr != end) {
      throw ParseError(a.line, "expected an integer, got '" + a.value + "'");
    }
    return v;
  }

  static float to_float(std::string_view text, int line) {
    float v = 0;
    const char* end = text.data() + text.size();
    auto [ptr, ec] = std::from_chars(text.data(), end, v);
    if (ec != std::errc{} || ptr != end) {
      throw ParseError(line, "expected a number, got '" + std::string(text) + "'");
    }
    return v;
  }

  void reject_unused() const {
    for (const auto& [key, attr] : raw_.attrs) {
      if (std::find(used_.begin(), used_.end(), key) == used_.end()) {
        throw ParseError(attr.line, "attribute '" + key + "' is not valid for " + raw_.kind +
                                        " layer '" + raw_.name + "'");
      }
    }
  }

 private:
  RawLayer& raw_;
  std::vector<std::string> used_;
};

Activation parse_activation(const Attr& a) {
  if (a.value == "linear") return {ActivationKind::linear};
  if (a.value == "leaky") return {ActivationKind::leaky_relu};
  if (a.value == "mish") return {ActivationKind::mish};
  if (a.value == "logistic" || a.value == "sigmoid") return {ActivationKind::sigmoid};
  throw ParseError(a.line, "unknown activation '" + a.value + "'");
}

void read_activation(AttrReader& r, LayerSpec& spec, ActivationKind fallback) {
  spec.activation.kind = fallback;
  if (r.has("activation")) spec.activation = parse_activation(r.require("activation"));
  if (r.has("slope")) {
    const Attr& a = r.require("slope");
    if (spec.activation.kind != ActivationKind::leaky_relu) {
      throw ParseError(a.line, "'slope' only applies to leaky activation");
    }
    spec.activation.slope = AttrReader::to_float(a.value, a.line);
  }
}

LayerSpec build_layer(RawLayer& raw) {
  const auto kind = parse_layer_kind(raw.kind);
  if (!kind) throw ParseError(raw.line, "unknown layer kind '" + raw.kind + "'");
  LayerSpec spec;
  spec.name = raw.name;
  spec.kind = *kind;
  spec.line = raw.line;
  AttrReader r(raw);
  if (r.has("from")) {
    const Attr& a = r.require("from");
    for (auto part : split_list(a.value)) spec.from.emplace_back(part);
    if (spec.from.empty()) throw ParseError(a.line, "'from' lists no layers");
  }
  spec.group = r.get_string("group", "");

  auto check = [&](bool ok, const std::string& key, const std::string& message) {
    if (!ok) {
      const int line = r.has(key) ? r.require(key).line : raw.line;
      throw ParseError(line, "layer '" + raw.name + "': " + message);
    }
  };

  switch (spec.kind) {
    case LayerKind::input:
      spec.channels = r.get_int("channels");
      if (r.has("size")) {
        spec.width = spec.height = r.get_int("size");
      } else {
        spec.width = r.get_int("width");
        spec.height = r.get_int("height");
      }
      check(spec.channels >= 1, "channels", "channels must be >= 1");
      check(spec.width >= 1 && spec.height >= 1, "size", "input extents must be >= 1");
      check(spec.from.empty(), "from", "input layer cannot have producers");
      break;
    case LayerKind::conv:
      spec.filters = r.get_int("filters");
      spec.size = r.get_int("size");
      spec.stride = r.get_int("stride", 1);
      spec.batch_normalize = r.get_int("batch_normalize", 1) != 0;
      read_activation(r, spec, ActivationKind::linear);
      check(spec.filters >= 1, "filters", "filters must be >= 1");
      check(spec.size == 1 || spec.size == 3, "size", "size must be 1 or 3");
      check(spec.stride == 1 || spec.stride == 2, "stride", "stride must be 1 or 2");
      break;
    case LayerKind::csp_block:
      spec.filters = r.get_int("filters");
      spec.repeat = r.get_int("repeat");
      read_activation(r, spec, ActivationKind::mish);
      check(spec.filters >= 2 && spec.filters % 2 == 0, "filters",
            "csp_block filters must be even and >= 2");
      check(spec.repeat >= 1, "repeat", "repeat must be >= 1");
      break;
    case LayerKind::spp:
      spec.filters = r.get_int("filters");
      read_activation(r, spec, ActivationKind::leaky_relu);
      check(spec.filters >= 1, "filters", "filters must be >= 1");
      break;
    case LayerKind::maxpool:
      spec.size = r.get_int("size");
      spec.stride = r.get_int("stride", 1);
      check(spec.size >= 1 && spec.size % 2 == 1, "size", "max-pool size must be odd");
      check(spec.stride >= 1, "stride", "stride must be >= 1");
      break;
    case LayerKind::upsample:
      spec.stride = r.get_int("stride", 2);
      check(spec.stride == 2, "stride", "only 2x upsampling is supported");
      break;
    case LayerKind::concat:
      check(!spec.from.empty(), "from", "concat requires 'from'");
      break;
    case LayerKind::sam:
      break;
    case LayerKind::yolo_head: {
      spec.classes = r.get_int("classes");
      const Attr& a = r.require("anchors");
      const auto parts = split_list(a.value);
      if (parts.size() % 2 != 0) throw ParseError(a.line, "anchors need (width, height) pairs");
      for (std::size_t i = 0; i < parts.size(); i += 2) {
        spec.anchors.push_back(
            {AttrReader::to_float(parts[i], a.line), AttrReader::to_float(parts[i + 1], a.line)});
      }
      check(spec.classes >= 1, "classes", "classes must be >= 1");
      check(spec.anchors.size() == 3, "anchors", "exactly 3 anchors per scale are required");
      for (const auto& anchor : spec.anchors) {
        check(anchor.width > 0 && anchor.height > 0, "anchors", "anchors must be positive");
      }
      break;
    }
  }
  if (spec.kind != LayerKind::concat && spec.from.size() > 1) {
    throw ParseError(r.require("from").line,
                     "layer '" + raw.name + "' accepts a single producer");
  }
  r.reject_unused();
  return spec;
}

std::vector<RawLayer> tokenize(std::string_view text) {
  std::vector<RawLayer> raws;
  int line_no = 0;
  std::size_t pos = 0;
  while (pos <= text.size()) {
    std::size_t eol = text.find('\n', pos);
    if (eol == std::string_view::npos) eol = text.size();
    std::string_view line = text.substr(pos, eol - pos);
    pos = eol + 1;
    ++line_no;
    if (const auto hash = line.find('#'); hash != std::string_view::npos) {
      line = line.substr(0, hash);
    }
    if (trim(line).empty()) continue;
    const bool indented = line.front() == ' ' || line.front() == '\t';
    if (!indented) {
      const auto tokens = split_ws(trim(line));
      if (tokens.size() != 3 || tokens[0] != "layer") {
        throw ParseError(line_no, "expected 'layer <name> <kind>'");
      }
      raws.push_back(RawLayer{std::string(tokens[1]), std::string(tokens[2]), line_no, {}});
      continue;
    }
    if (raws.empty()) throw ParseError(line_no, "attribute outside of a layer block");
    const std::string_view body = trim(line);
    const auto colon = body.find(':');
    if (colon == std::string_view::npos) throw ParseError(line_no, "expected 'key: value'");
    const std::string key(trim(body.substr(0, colon)));
    const std::string value(trim(body.substr(colon + 1)));
    if (key.empty()) throw ParseError(line_no, "empty attribute name");
    if (value.empty()) throw ParseError(line_no, "attribute '" + key + "' has no value");
    auto& attrs = raws.back().attrs;
    if (attrs.count(key)) throw ParseError(line_no, "duplicate attribute '" + key + "'");
    attrs.emplace(key, Attr{value, line_no});
  }
  return raws;
}

struct ShapeFailure {
  int layer;
  std::string axis;
  std::string message;
};

// Returns shapes, or the first failing layer.
std::vector<FeatureShape> infer_impl(const ModelGraph& g, FeatureShape input,
                                     std::optional<ShapeFailure>& failure) {
  std::vector<FeatureShape> shapes(g.layers.size());
  auto fail = [&](std::size_t i, std::string axis, std::string message) {
    failure = ShapeFailure{static_cast<int>(i), std::move(axis),
                           "layer '" + g.layers[i].name + "': " + std::move(message)};
  };
  if (input.h % 32 != 0 || input.w % 32 != 0 || input.h <= 0 || input.w <= 0) {
    fail(0, "h", "input extents " + std::to_string(input.h) + "x" + std::to_string(input.w) +
                     " are not divisible by 32");
    return {};
  }
  for (std::size_t i = 0; i < g.layers.size(); ++i) {
    const LayerSpec& L = g.layers[i];
    if (L.kind == LayerKind::input) {
      shapes[i] = input;
      continue;
    }
    const FeatureShape in = shapes[g.inputs[i].front()];
    FeatureShape out = in;
    switch (L.kind) {
      case LayerKind::input:
        break;
      case LayerKind::conv: {
        const int pad = L.size / 2;
        const int h = (in.h + 2 * pad - L.size) / L.stride + 1;
        const int w = (in.w + 2 * pad - L.size) / L.stride + 1;
        if (in.h + 2 * pad - L.size < 0 || h < 1 || w < 1) {
          fail(i, "h", "non-positive output extent");
          return {};
        }
        out = {L.filters, h, w};
        break;
      }
      case LayerKind::csp_block:
        if (in.c != L.filters) {
          fail(i, "c", "input has " + std::to_string(in.c) + " channels, block expects " +
                           std::to_string(L.filters));
          return {};
        }
        break;
      case LayerKind::spp:
        if (in.h < 13 || in.w < 13) {
          fail(i, "h", "spatial extent " + std::to_string(in.h) + "x" + std::to_string(in.w) +
                           " is below the 13x13 pooling window");
          return {};
        }
        out.c = L.filters;
        break;
      case LayerKind::maxpool: {
        const int pad = (L.size - 1) / 2;
        out.h = (in.h + 2 * pad - L.size) / L.stride + 1;
        out.w = (in.w + 2 * pad - L.size) / L.stride + 1;
        if (out.h < 1 || out.w < 1) {
          fail(i, "h", "non-positive output extent");
          return {};
        }
        break;
      }
      case LayerKind::upsample:
        out.h *= 2;
        out.w *= 2;
        break;
      case LayerKind::concat:
        out.c = 0;
        for (int src : g.inputs[i]) {
          const FeatureShape s = shapes[src];
          if (s.h != in.h || s.w != in.w) {
            fail(i, "h", "spatial mismatch between '" + g.layers[g.inputs[i].front()].name +
                             "' " + std::to_string(in.h) + "x" + std::to_string(in.w) +
                             " and '" + g.layers[src].name + "' " + std::to_string(s.h) + "x" +
                             std::to_string(s.w));
            return {};
          }
          out.c += s.c;
        }
        break;
      case LayerKind::sam:
        break;
      case LayerKind::yolo_head:
        if (in.c != 3 * (5 + L.classes)) {
          fail(i, "c", "head input has " + std::to_string(in.c) + " channels, expected " +
                           std::to_string(3 * (5 + L.classes)));
          return {};
        }
        break;
    }
    shapes[i] = out;
  }
  return shapes;
}

void fill_shapes_and_params(ModelGraph& g, int error_line_fallback) {
  std::optional<ShapeFailure> failure;
  const LayerSpec& in = g.layers.front();
  g.shapes = infer_impl(g, {in.channels, in.height, in.width}, failure);
  if (failure) {
    const int line = g.layers[failure->layer].line;
    throw ParseError(line > 0 ? line : error_line_fallback, failure->message);
  }
  g.param_count = count_params(g);
}

std::string format_float(float v) {
  char buf[32];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, ptr);
}

}  // namespace

ModelGraph parse_model_config(std::string_view text) {
  auto raws = tokenize(text);
  if (raws.empty()) throw ParseError(0, "no layers declared");

  ModelGraph g;
  std::map<std::string, int> declared_at;
  for (auto& raw : raws) {
    if (declared_at.count(raw.name)) {
      throw ParseError(raw.line, "duplicate layer name '" + raw.name + "' (first declared on line " +
                                     std::to_string(declared_at[raw.name]) + ")");
    }
    declared_at[raw.name] = raw.line;
  }
  for (auto& raw : raws) g.layers.push_back(build_layer(raw));

  int input_count = 0;
  for (const auto& layer : g.layers) input_count += layer.kind == LayerKind::input;
  if (input_count != 1 || g.layers.front().kind != LayerKind::input) {
    throw ParseError(g.layers.front().line, "exactly one input layer is required and it must come first");
  }

  g.inputs.resize(g.layers.size());
  for (std::size_t i = 1; i < g.layers.size(); ++i) {
    const LayerSpec& L = g.layers[i];
    if (L.from.empty()) {
      g.inputs[i].push_back(static_cast<int>(i) - 1);
    } else {
      for (const auto& ref : L.from) {
        const int idx = g.find(ref);
        if (idx < 0) throw ParseError(L.line, "layer '" + L.name + "' references unknown layer '" + ref + "'");
        if (idx >= static_cast<int>(i)) {
          throw ParseError(L.line, "layer '" + L.name + "' has a forward reference to '" + ref + "'");
        }
        g.inputs[i].push_back(idx);
      }
    }
    for (int src : g.inputs[i]) g.edges.emplace_back(src, static_cast<int>(i));
  }
  fill_shapes_and_params(g, g.layers.front().line);
  return g;
}

ModelGraph load_model_config(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open model config '" + path + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse_model_config(ss.str());
}

std::string serialize_model_config(const ModelGraph& g) {
  std::ostringstream out;
  for (const LayerSpec& L : g.layers) {
    out << "layer " << L.name << ' ' << to_string(L.kind) << '\n';
    if (!L.from.empty()) {
      out << "  from: ";
      for (std::size_t i = 0; i < L.from.size(); ++i) out << (i ? ", " : "") << L.from[i];
      out << '\n';
    }
    auto activation = [&] {
      out << "  activation: " << to_string(L.activation.kind) << '\n';
      if (L.activation.kind == ActivationKind::leaky_relu) {
        out << "  slope: " << format_float(L.activation.slope) << '\n';
      }
    };
    switch (L.kind) {
      case LayerKind::input:
        out << "  channels: " << L.channels << "\n  width: " << L.width
            << "\n  height: " << L.height << '\n';
        break;
      case LayerKind::conv:
        out << "  filters: " << L.filters << "\n  size: " << L.size << "\n  stride: " << L.stride
            << "\n  batch_normalize: " << (L.batch_normalize ? 1 : 0) << '\n';
        activation();
        break;
      case LayerKind::csp_block:
        out << "  filters: " << L.filters << "\n  repeat: " << L.repeat << '\n';
        activation();
        break;
      case LayerKind::spp:
        out << "  filters: " << L.filters << '\n';
        activation();
        break;
      case LayerKind::maxpool:
        out << "  size: " << L.size << "\n  stride: " << L.stride << '\n';
        break;
      case LayerKind::upsample:
        out << "  stride: " << L.stride << '\n';
        break;
      case LayerKind::concat:
      case LayerKind::sam:
        break;
      case LayerKind::yolo_head:
        out << "  classes: " << L.classes << "\n  anchors: ";
        for (std::size_t i = 0; i < L.anchors.size(); ++i) {
          out << (i ? ", " : "") << format_float(L.anchors[i].width) << ','
              << format_float(L.anchors[i].height);
        }
        out << '\n';
        break;
    }
    if (!L.group.empty()) out << "  group: " << L.group << '\n';
    out << '\n';
  }
  return out.str();
}

std::vector<FeatureShape> infer_shapes(const ModelGraph& g, FeatureShape input) {
  if (g.layers.empty()) return {};
  std::optional<ShapeFailure> failure;
  auto shapes = infer_impl(g, input, failure);
  if (failure) throw DimensionError(failure->axis, failure->message);
  return shapes;
}

ModelGraph with_input_size(const ModelGraph& g, int size) {
  ModelGraph out = g;
  out.layers.front().width = size;
  out.layers.front().height = size;
  out.shapes = infer_shapes(out, {out.layers.front().channels, size, size});
  out.param_count = count_params(out);
  return out;
}

std::int64_t layer_param_count(const LayerSpec& L, int in_channels) {
  const std::int64_t in = in_channels;
  switch (L.kind) {
    case LayerKind::conv: {
      const std::int64_t f = L.filters;
      return std::int64_t{L.size} * L.size * in * f + (L.batch_normalize ? 4 * f : f);
    }
    case LayerKind::csp_block: {
      const std::int64_t c = L.filters;
      const std::int64_t h = c / 2;
      const std::int64_t routes = 2 * (c * h + 4 * h);
      const std::int64_t bottleneck = (h * h + 4 * h) + (9 * h * h + 4 * h);
      const std::int64_t transition = 2 * h * c + 4 * c;
      return routes + L.repeat * bottleneck + transition;
    }
    case LayerKind::spp:
      return 4 * in * L.filters + 4 * std::int64_t{L.filters};
    case LayerKind::sam:
      return in * in + in;
    default:
      return 0;
  }
}

std::int64_t count_params(const ModelGraph& g) {
  std::int64_t total = 0;
  for (std::size_t i = 1; i < g.layers.size(); ++i) {
    if (g.inputs[i].empty()) continue;
    total += layer_param_count(g.layers[i], g.shapes.at(g.inputs[i].front()).c);
  }
  return total;
}

std::int64_t count_params(const ModelGraph& g, std::string_view group) {
  std::int64_t total = 0;
  for (std::size_t i = 1; i < g.layers.size(); ++i) {
    if (g.layers[i].group != group || g.inputs[i].empty()) continue;
    total += layer_param_count(g.layers[i], g.shapes.at(g.inputs[i].front()).c);
  }
  return total;
}

}  // namespace yolo4
