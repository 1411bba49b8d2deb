#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "yolo4/box.hpp"
#include "yolo4/tensor.hpp"

namespace yolo4 {

/// Decodes binary PPM (P6, maxval <= 255) or uncompressed 24-bit BMP, picked
/// by magic bytes. Result is (1, 3, H, W) with R, G, B planes in [0, 1].
Tensor decode_image(std::span<const std::uint8_t> bytes);
Tensor decode_image(const std::filesystem::path& path);

/// P6 with maxval 255; values are clamped to [0, 1] and rounded.
std::vector<std::uint8_t> encode_ppm(const Tensor& image);

/// Writes PPM. Other extensions raise ImageError(unsupported_format).
void encode_image(const Tensor& image, const std::filesystem::path& path);

using Rgb = std::array<float, 3>;

/// Draws a rectangle outline `thickness` pixels wide, clipped to the image.
void draw_rectangle(Tensor& image, const BBox& box, const Rgb& color, int thickness = 2);

/// Burns text in a 3x5 pixel font scaled by `scale`, top-left at (x, y).
/// Supports digits, '.', ':', '-' and ' '; other characters render blank.
void draw_text(Tensor& image, int x, int y, const std::string& text, const Rgb& color,
               int scale = 2);

}  // namespace yolo4
