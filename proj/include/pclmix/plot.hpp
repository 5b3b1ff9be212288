#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

namespace pclmix::plot {

using Color = std::array<std::uint8_t, 3>;

inline constexpr std::array<Color, 6> kPalette{{{31, 119, 180},
                                                {255, 127, 14},
                                                {44, 160, 44},
                                                {214, 39, 40},
                                                {148, 103, 189},
                                                {140, 86, 75}}};

struct Series {
  std::string name;
  std::vector<double> x;
  std::vector<double> y;
  Color color{0, 0, 0};
};

/// Axes, light grid and one polyline per series (markers when a series has
/// few points). No text rendering; series names go to the companion CSV.
void write_line_chart(const std::filesystem::path& path, const std::vector<Series>& series,
                      int width = 640, int height = 400);

}  // namespace pclmix::plot
