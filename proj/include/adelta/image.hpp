#pragma once

// PNG I/O and conversions between backbone samples and 8-bit images.

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "adelta/tensor.hpp"

namespace adelta {

struct Image8 {
  std::size_t width = 0;
  std::size_t height = 0;
  std::size_t channels = 1;  // 1 (gray) or 3 (RGB)
  std::vector<std::uint8_t> pixels;

  bool operator==(const Image8&) const = default;
};

std::vector<std::uint8_t> encode_png(const Image8& img);
Image8 decode_png(const std::vector<std::uint8_t>& bytes);

void write_file(const std::filesystem::path& path, const std::vector<std::uint8_t>& bytes);
std::vector<std::uint8_t> read_file(const std::filesystem::path& path);

// Sample values are mapped through 255 * (tanh(x / 4) + 1) / 2 and each
// sample cell becomes a block x block pixel square.
Image8 render_sample(const Sample& s, std::size_t block = 16);

// Inverse of render_sample: averages each block and undoes the tanh map.
// Images whose size is not a multiple of the shape are bilinearly resized.
Sample decode_sample(const Image8& img, ImageShape shape);

// Bilinear resize of a (height x width x channels) sample with
// half-pixel-centre alignment.
Sample resize_bilinear(const Sample& s, std::size_t height, std::size_t width);

}  // namespace adelta
