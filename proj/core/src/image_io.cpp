#include "yolo4/image_io.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <fstream>
#include <iterator>

#include "yolo4/error.hpp"

namespace yolo4 {

namespace {

using Kind = ImageError::Kind;

[[noreturn]] void corrupt(const std::string& what) { throw ImageError(Kind::corrupt_header, what); }

void check_image(const Tensor& image) {
  if (image.n() != 1 || image.c() != 3) {
    throw DimensionError("c", "expected a (1, 3, H, W) image, got " + to_string(image.shape()));
  }
}

Tensor decode_ppm(std::span<const std::uint8_t> bytes) {
  std::size_t pos = 2;
  auto skip_space = [&] {
    while (pos < bytes.size()) {
      if (bytes[pos] == '#') {
        while (pos < bytes.size() && bytes[pos] != '\n') ++pos;
      } else if (std::isspace(bytes[pos])) {
        ++pos;
      } else {
        break;
      }
    }
  };
  auto read_int = [&](const char* field) {
    skip_space();
    if (pos >= bytes.size() || !std::isdigit(bytes[pos])) corrupt(std::string("PPM header missing ") + field);
    long v = 0;
    while (pos < bytes.size() && std::isdigit(bytes[pos])) {
      v = v * 10 + (bytes[pos++] - '0');
      if (v > 1'000'000) corrupt(std::string("PPM ") + field + " out of range");
    }
    return static_cast<int>(v);
  };
  const int w = read_int("width");
  const int h = read_int("height");
  const int maxval = read_int("maxval");
  if (w < 1 || h < 1) corrupt("PPM extents must be positive");
  if (maxval < 1 || maxval > 255) {
    throw ImageError(Kind::unsupported_format, "PPM maxval " + std::to_string(maxval) + " not supported");
  }
  if (pos >= bytes.size() || !std::isspace(bytes[pos])) corrupt("PPM header not terminated");
  ++pos;
  const std::size_t n = static_cast<std::size_t>(w) * h;
  if (bytes.size() - pos < 3 * n) corrupt("PPM pixel data truncated");
  Tensor out(Shape{1, 3, h, w});
  auto r = out.plane(0, 0);
  auto g = out.plane(0, 1);
  auto b = out.plane(0, 2);
  const float scale = 1.0f / static_cast<float>(maxval);
  for (std::size_t i = 0; i < n; ++i) {
    r[i] = bytes[pos + 3 * i] * scale;
    g[i] = bytes[pos + 3 * i + 1] * scale;
    b[i] = bytes[pos + 3 * i + 2] * scale;
  }
  return out;
}

std::uint32_t le32(std::span<const std::uint8_t> b, std::size_t at) {
  return static_cast<std::uint32_t>(b[at]) | static_cast<std::uint32_t>(b[at + 1]) << 8 |
         static_cast<std::uint32_t>(b[at + 2]) << 16 | static_cast<std::uint32_t>(b[at + 3]) << 24;
}

std::uint16_t le16(std::span<const std::uint8_t> b, std::size_t at) {
  return static_cast<std::uint16_t>(b[at] | b[at + 1] << 8);
}

Tensor decode_bmp(std::span<const std::uint8_t> bytes) {
  if (bytes.size() < 54) corrupt("BMP header truncated");
  const std::uint32_t offset = le32(bytes, 10);
  const std::uint32_t info_size = le32(bytes, 14);
  if (info_size < 40) throw ImageError(Kind::unsupported_format, "BMP core headers not supported");
  const auto w = static_cast<std::int32_t>(le32(bytes, 18));
  const auto h_raw = static_cast<std::int32_t>(le32(bytes, 22));
  const std::uint16_t bpp = le16(bytes, 28);
  const std::uint32_t compression = le32(bytes, 30);
  if (bpp != 24 || compression != 0) {
    throw ImageError(Kind::unsupported_format,
                     "only uncompressed 24-bit BMP is supported (bpp " + std::to_string(bpp) + ")");
  }
  if (w < 1 || h_raw == 0 || w > 1'000'000 || std::abs(h_raw) > 1'000'000) corrupt("BMP extents invalid");
  const bool top_down = h_raw < 0;
  const int h = std::abs(h_raw);
  const std::size_t stride = (static_cast<std::size_t>(w) * 3 + 3) & ~std::size_t{3};
  if (offset < 54 || offset > bytes.size() || bytes.size() - offset < stride * h) {
    corrupt("BMP pixel data truncated");
  }
  Tensor out(Shape{1, 3, h, w});
  for (int row = 0; row < h; ++row) {
    const int y = top_down ? row : h - 1 - row;
    const std::size_t base = offset + stride * row;
    for (int x = 0; x < w; ++x) {
      const std::size_t p = base + 3 * static_cast<std::size_t>(x);
      out.at(0, 0, y, x) = bytes[p + 2] / 255.0f;
      out.at(0, 1, y, x) = bytes[p + 1] / 255.0f;
      out.at(0, 2, y, x) = bytes[p] / 255.0f;
    }
  }
  return out;
}

}  // namespace

Tensor decode_image(std::span<const std::uint8_t> bytes) {
  if (bytes.size() >= 2 && bytes[0] == 'P' && bytes[1] == '6') return decode_ppm(bytes);
  if (bytes.size() >= 2 && bytes[0] == 'B' && bytes[1] == 'M') return decode_bmp(bytes);
  if (bytes.size() < 2) corrupt("image too short to identify");
  throw ImageError(Kind::unsupported_format, "unrecognized image format");
}

Tensor decode_image(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ImageError(Kind::io, "cannot open " + path.string());
  const std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)),
                                        std::istreambuf_iterator<char>());
  try {
    return decode_image(bytes);
  } catch (const ImageError& e) {
    throw ImageError(e.kind(), path.string() + ": " + e.what());
  }
}

std::vector<std::uint8_t> encode_ppm(const Tensor& image) {
  check_image(image);
  const std::string header =
      "P6\n" + std::to_string(image.w()) + " " + std::to_string(image.h()) + "\n255\n";
  std::vector<std::uint8_t> out(header.begin(), header.end());
  const std::size_t n = image.shape().plane();
  out.reserve(out.size() + 3 * n);
  for (std::size_t i = 0; i < n; ++i) {
    for (int ch = 0; ch < 3; ++ch) {
      const float v = std::clamp(image.plane(0, ch)[i], 0.0f, 1.0f);
      out.push_back(static_cast<std::uint8_t>(std::lround(v * 255.0f)));
    }
  }
  return out;
}

void encode_image(const Tensor& image, const std::filesystem::path& path) {
  if (path.extension() != ".ppm") {
    throw ImageError(Kind::unsupported_format, "can only write .ppm, got " + path.string());
  }
  const auto bytes = encode_ppm(image);
  std::ofstream out(path, std::ios::binary);
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw ImageError(Kind::io, "cannot write " + path.string());
}

void draw_rectangle(Tensor& image, const BBox& box, const Rgb& color, int thickness) {
  check_image(image);
  const int x1 = static_cast<int>(std::lround(box.x1));
  const int y1 = static_cast<int>(std::lround(box.y1));
  const int x2 = static_cast<int>(std::lround(box.x2)) - 1;
  const int y2 = static_cast<int>(std::lround(box.y2)) - 1;
  auto put = [&](int x, int y) {
    if (x < 0 || y < 0 || x >= image.w() || y >= image.h()) return;
    for (int ch = 0; ch < 3; ++ch) image.at(0, ch, y, x) = color[static_cast<std::size_t>(ch)];
  };
  for (int t = 0; t < thickness; ++t) {
    for (int x = x1; x <= x2; ++x) {
      put(x, y1 + t);
      put(x, y2 - t);
    }
    for (int y = y1; y <= y2; ++y) {
      put(x1 + t, y);
      put(x2 - t, y);
    }
  }
}

namespace {

// 3x5 glyphs, one row per 3 bits, top row first.
std::array<std::uint8_t, 5> glyph(char c) {
  switch (c) {
    case '0': return {7, 5, 5, 5, 7};
    case '1': return {2, 6, 2, 2, 7};
    case '2': return {7, 1, 7, 4, 7};
    case '3': return {7, 1, 7, 1, 7};
    case '4': return {5, 5, 7, 1, 1};
    case '5': return {7, 4, 7, 1, 7};
    case '6': return {7, 4, 7, 5, 7};
    case '7': return {7, 1, 1, 1, 1};
    case '8': return {7, 5, 7, 5, 7};
    case '9': return {7, 5, 7, 1, 7};
    case '.': return {0, 0, 0, 0, 2};
    case ':': return {0, 2, 0, 2, 0};
    case '-': return {0, 0, 7, 0, 0};
    default: return {0, 0, 0, 0, 0};
  }
}

}  // namespace

void draw_text(Tensor& image, int x, int y, const std::string& text, const Rgb& color, int scale) {
  check_image(image);
  scale = std::max(scale, 1);
  for (std::size_t i = 0; i < text.size(); ++i) {
    const auto rows = glyph(text[i]);
    const int gx = x + static_cast<int>(i) * 4 * scale;
    for (int r = 0; r < 5; ++r) {
      for (int col = 0; col < 3; ++col) {
        if (!((rows[static_cast<std::size_t>(r)] >> (2 - col)) & 1)) continue;
        for (int dy = 0; dy < scale; ++dy) {
          for (int dx = 0; dx < scale; ++dx) {
            const int px = gx + col * scale + dx;
            const int py = y + r * scale + dy;
            if (px < 0 || py < 0 || px >= image.w() || py >= image.h()) continue;
            for (int ch = 0; ch < 3; ++ch) image.at(0, ch, py, px) = color[static_cast<std::size_t>(ch)];
          }
        }
      }
    }
  }
}

}  // namespace yolo4
