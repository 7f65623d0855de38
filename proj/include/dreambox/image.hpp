#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

namespace dreambox {

/// 8-bit interleaved RGB pixel buffer, row-major.
struct RgbImage
{
  int width = 0;
  int height = 0;
  std::vector<std::uint8_t> pixels;

  RgbImage() = default;
  RgbImage(int w, int h, std::uint8_t fill = 0)
    : width(w), height(h), pixels(static_cast<std::size_t>(w) * h * 3, fill)
  {
  }

  std::uint8_t* at(int x, int y) { return pixels.data() + (static_cast<std::size_t>(y) * width + x) * 3; }
  const std::uint8_t* at(int x, int y) const { return pixels.data() + (static_cast<std::size_t>(y) * width + x) * 3; }

  friend bool operator==(const RgbImage&, const RgbImage&) = default;
};

/// PNG or JPEG, detected from the file signature. Grey and alpha inputs are
/// converted to RGB.
RgbImage read_image(const std::filesystem::path& path);

RgbImage decode_png(std::span<const std::uint8_t> bytes);
std::vector<std::uint8_t> encode_png(const RgbImage& image);

void write_png(const RgbImage& image, const std::filesystem::path& path);

/// Bilinear resample of the region [x0, x1) x [y0, y1) (continuous pixel
/// coordinates) to an out_w x out_h image.
RgbImage resample_region(const RgbImage& image, double x0, double y0, double x1, double y1, int out_w, int out_h);

} // namespace dreambox
