#pragma once

#include <cstdint>
#include <filesystem>
#include <vector>

namespace pclmix::io {

struct Gray8 {
  int height = 0;
  int width = 0;
  std::vector<std::uint8_t> pixels;  // row-major

  std::uint8_t at(int y, int x) const { return pixels[static_cast<size_t>(y) * width + x]; }
};

struct Rgb8 {
  int height = 0;
  int width = 0;
  std::vector<std::uint8_t> pixels;  // row-major, interleaved RGB
};

/// Reads an 8-bit PNG. Color images are converted to luma; 16-bit inputs are
/// reduced to 8 bits.
Gray8 read_png_gray(const std::filesystem::path& path);
void write_png_gray(const std::filesystem::path& path, const Gray8& img);
void write_png_rgb(const std::filesystem::path& path, const Rgb8& img);

}  // namespace pclmix::io
