#pragma once

#include <cstdint>
#include <filesystem>
#include <vector>

namespace repalign {

/// 8-bit RGB raster, row-major, interleaved.
struct Image {
  int width = 0;
  int height = 0;
  std::vector<std::uint8_t> rgb;

  Image() = default;
  Image(int w, int h, std::uint8_t r = 0, std::uint8_t g = 0, std::uint8_t b = 0);

  std::uint8_t* pixel(int x, int y) { return rgb.data() + 3 * (static_cast<std::size_t>(y) * width + x); }
  const std::uint8_t* pixel(int x, int y) const { return rgb.data() + 3 * (static_cast<std::size_t>(y) * width + x); }

  bool operator==(const Image&) const = default;
};

/// Decodes PNG/JPEG (anything the codec layer reads) into RGB.
Image read_image(const std::filesystem::path& path);

/// Writes a lossless PNG; byte-stable for identical pixels.
void write_png(const Image& img, const std::filesystem::path& path);

/// Writes a single-channel map as an 8-bit grayscale PNG scaled by its maximum.
void write_heatmap_png(const std::vector<double>& values, int width, int height, const std::filesystem::path& path);

/// Bilinear resampling with pixel-centre alignment and clamped borders.
Image resize_bilinear(const Image& img, int width, int height);

}  // namespace repalign
