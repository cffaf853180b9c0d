#pragma once

#include "stereops/common.hpp"

#include <string>
#include <vector>

namespace stereops {

/// Interleaved row-major image with values nominally in [0, 1].
struct Image {
  int width = 0;
  int height = 0;
  int channels = 0;
  std::vector<double> pixels;

  Image() = default;
  Image(int w, int h, int c, double fill = 0.0);

  double& at(int x, int y, int c = 0) { return pixels[index(x, y, c)]; }
  double at(int x, int y, int c = 0) const { return pixels[index(x, y, c)]; }
  /// height x width plane of one channel.
  Matrix channel(int c) const;
  static Image from_planes(const std::vector<Matrix>& planes);

 private:
  std::size_t index(int x, int y, int c) const {
    return (static_cast<std::size_t>(y) * width + x) * channels + c;
  }
};

/// 8- or 16-bit PNG (gray, gray+alpha, RGB, RGBA); values scaled to [0, 1].
Image read_png(const std::string& path);
/// Values are clamped to [0, 1] and quantised to `bit_depth` (8 or 16).
void write_png(const std::string& path, const Image& image, int bit_depth = 16);

/// Portable float map (1 or 3 channels, little-endian, top row first in memory).
Image read_pfm(const std::string& path);
void write_pfm(const std::string& path, const Image& image);

/// Reads .png or .pfm by extension.
Image read_image(const std::string& path);

/// 0.299 R + 0.587 G + 0.114 B; single-channel images pass through and alpha
/// is ignored.
Matrix to_grayscale(const Image& image);

}  // namespace stereops
