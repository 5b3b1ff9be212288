#include "pclmix/plot.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "pclmix/image_io.hpp"

namespace pclmix::plot {
namespace {

class Canvas {
 public:
  Canvas(int w, int h) : img_{h, w, std::vector<std::uint8_t>(static_cast<size_t>(w) * h * 3, 255)} {}

  void set(int x, int y, const Color& c) {
    if (x < 0 || y < 0 || x >= img_.width || y >= img_.height) return;
    auto* p = &img_.pixels[(static_cast<size_t>(y) * img_.width + x) * 3];
    p[0] = c[0];
    p[1] = c[1];
    p[2] = c[2];
  }

  void line(int x0, int y0, int x1, int y1, const Color& c) {
    const int dx = std::abs(x1 - x0), sx = x0 < x1 ? 1 : -1;
    const int dy = -std::abs(y1 - y0), sy = y0 < y1 ? 1 : -1;
    int err = dx + dy;
    while (true) {
      set(x0, y0, c);
      if (x0 == x1 && y0 == y1) break;
      const int e2 = 2 * err;
      if (e2 >= dy) {
        err += dy;
        x0 += sx;
      }
      if (e2 <= dx) {
        err += dx;
        y0 += sy;
      }
    }
  }

  void square(int x, int y, int r, const Color& c) {
    for (int dy = -r; dy <= r; ++dy)
      for (int dx = -r; dx <= r; ++dx) set(x + dx, y + dy, c);
  }

  const io::Rgb8& image() const { return img_; }

 private:
  io::Rgb8 img_;
};

}  // namespace

void write_line_chart(const std::filesystem::path& path, const std::vector<Series>& series,
                      int width, int height) {
  double xmin = std::numeric_limits<double>::infinity(), xmax = -xmin;
  double ymin = xmin, ymax = -xmin;
  for (const auto& s : series) {
    for (size_t i = 0; i < std::min(s.x.size(), s.y.size()); ++i) {
      if (!std::isfinite(s.x[i]) || !std::isfinite(s.y[i])) continue;
      xmin = std::min(xmin, s.x[i]);
      xmax = std::max(xmax, s.x[i]);
      ymin = std::min(ymin, s.y[i]);
      ymax = std::max(ymax, s.y[i]);
    }
  }
  if (!std::isfinite(xmin)) xmin = 0, xmax = 1, ymin = 0, ymax = 1;
  if (xmax == xmin) xmax = xmin + 1;
  if (ymax == ymin) ymax = ymin + 1;
  const double pad = 0.05 * (ymax - ymin);
  ymin -= pad;
  ymax += pad;

  const int left = 40, right = width - 15, top = 15, bottom = height - 30;
  auto px = [&](double x) { return left + static_cast<int>(std::lround((x - xmin) / (xmax - xmin) * (right - left))); };
  auto py = [&](double y) { return bottom - static_cast<int>(std::lround((y - ymin) / (ymax - ymin) * (bottom - top))); };

  Canvas canvas(width, height);
  const Color grid{225, 225, 225}, axis{60, 60, 60};
  for (int i = 1; i < 5; ++i) {
    const int gy = top + (bottom - top) * i / 5, gx = left + (right - left) * i / 5;
    canvas.line(left, gy, right, gy, grid);
    canvas.line(gx, top, gx, bottom, grid);
  }
  if (ymin < 0 && ymax > 0) canvas.line(left, py(0.0), right, py(0.0), {170, 170, 170});
  canvas.line(left, bottom, right, bottom, axis);
  canvas.line(left, top, left, bottom, axis);

  for (const auto& s : series) {
    const size_t n = std::min(s.x.size(), s.y.size());
    bool have_prev = false;
    int prev_x = 0, prev_y = 0;
    for (size_t i = 0; i < n; ++i) {
      if (!std::isfinite(s.x[i]) || !std::isfinite(s.y[i])) {
        have_prev = false;
        continue;
      }
      const int cx = px(s.x[i]), cy = py(s.y[i]);
      if (have_prev) canvas.line(prev_x, prev_y, cx, cy, s.color);
      if (n <= 20) canvas.square(cx, cy, 2, s.color);
      prev_x = cx;
      prev_y = cy;
      have_prev = true;
    }
  }
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  io::write_png_rgb(path, canvas.image());
}

}  // namespace pclmix::plot
