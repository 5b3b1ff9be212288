#include "pclmix/data.hpp"

#include <algorithm>
#include <cmath>
#include <deque>
#include <fmt/format.h>
#include <numbers>

#include "pclmix/image_io.hpp"

namespace pclmix {

std::string shape_str(const torch::Tensor& t) {
  if (!t.defined()) return "[undefined]";
  std::string s = "[";
  for (int64_t i = 0; i < t.dim(); ++i) {
    if (i) s += ", ";
    s += std::to_string(t.size(i));
  }
  return s + "]";
}

}  // namespace pclmix

namespace pclmix::data {
namespace {

constexpr int kMinSynthSize = 32;

std::mt19937_64 make_rng(std::uint64_t seed, std::uint64_t stream) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(stream), static_cast<std::uint32_t>(stream >> 32)};
  return std::mt19937_64(seq);
}

double uniform(std::mt19937_64& rng, double lo, double hi) {
  return std::uniform_real_distribution<double>(lo, hi)(rng);
}

struct Geometry {
  double cy, cx;
  double outer, inner;         // ring radii
  double wobble_amp, wobble_phase;
  double ey, ex;               // ellipse center
  double major, minor, angle;  // ellipse semi-axes; angle of the minor axis
};

Geometry sample_geometry(std::mt19937_64& rng, int size, bool with_ellipse) {
  Geometry g{};
  const double s = size;
  g.outer = uniform(rng, 0.15, 0.21) * s;
  const double thickness = std::max(2.5, uniform(rng, 0.28, 0.40) * g.outer);
  g.inner = g.outer - thickness;
  g.wobble_amp = uniform(rng, 0.0, 0.08);
  g.wobble_phase = uniform(rng, 0.0, 2.0 * std::numbers::pi);
  g.major = uniform(rng, 0.75, 1.05) * g.outer;
  g.minor = uniform(rng, 0.40, 0.60) * g.outer;
  g.angle = uniform(rng, 0.0, 2.0 * std::numbers::pi);

  // Ellipse sits against the ring along the direction `angle`.
  const double offset = g.outer + 0.6 * g.minor;
  const double dy = with_ellipse ? offset * std::sin(g.angle) : 0.0;
  const double dx = with_ellipse ? offset * std::cos(g.angle) : 0.0;
  const double ca = std::cos(g.angle), sa = std::sin(g.angle);
  const double half_x = std::sqrt(g.major * g.major * sa * sa + g.minor * g.minor * ca * ca);
  const double half_y = std::sqrt(g.major * g.major * ca * ca + g.minor * g.minor * sa * sa);
  const double reach = g.outer * (1.0 + g.wobble_amp);

  double lo_y = -reach, hi_y = reach, lo_x = -reach, hi_x = reach;
  if (with_ellipse) {
    lo_y = std::min(lo_y, dy - half_y);
    hi_y = std::max(hi_y, dy + half_y);
    lo_x = std::min(lo_x, dx - half_x);
    hi_x = std::max(hi_x, dx + half_x);
  }
  const double margin = 2.0;
  const double min_cy = margin - lo_y, max_cy = s - 1.0 - margin - hi_y;
  const double min_cx = margin - lo_x, max_cx = s - 1.0 - margin - hi_x;
  g.cy = max_cy > min_cy ? uniform(rng, min_cy, max_cy) : 0.5 * (min_cy + max_cy);
  g.cx = max_cx > min_cx ? uniform(rng, min_cx, max_cx) : 0.5 * (min_cx + max_cx);
  g.ey = g.cy + dy;
  g.ex = g.cx + dx;
  return g;
}

std::vector<std::int64_t> paint_mask(const Geometry& g, int size, int k) {
  std::vector<std::int64_t> mask(static_cast<size_t>(size) * size, 0);
  const double ca = std::cos(g.angle), sa = std::sin(g.angle);
  for (int y = 0; y < size; ++y) {
    for (int x = 0; x < size; ++x) {
      const double py = y - g.cy, px = x - g.cx;
      const double r = std::hypot(py, px);
      const double theta = std::atan2(py, px);
      const double wobble = 1.0 + g.wobble_amp * std::sin(2.0 * theta + g.wobble_phase);
      std::int64_t cls = 0;
      if (k >= 4) {
        const double ey = y - g.ey, ex = x - g.ex;
        const double along_minor = ex * ca + ey * sa;
        const double along_major = -ex * sa + ey * ca;
        const double e = (along_major * along_major) / (g.major * g.major) +
                         (along_minor * along_minor) / (g.minor * g.minor);
        if (e <= 1.0) cls = 3;
      }
      if (r <= g.outer * wobble) cls = 1;
      if (r <= g.inner * wobble) cls = (k == 2) ? 1 : 2;
      mask[static_cast<size_t>(y) * size + x] = cls;
    }
  }
  return mask;
}

struct Intensities {
  double background, ring, disk, ellipse;
};

torch::Tensor render_image(const std::vector<std::int64_t>& mask, int size, std::mt19937_64& rng,
                           double noise_sigma) {
  const Intensities base{0.15, uniform(rng, 0.25, 0.35), uniform(rng, 0.75, 0.85),
                         uniform(rng, 0.65, 0.80)};
  // Smooth background texture: a handful of broad Gaussian bumps.
  struct Bump {
    double y, x, sigma, amp;
  };
  std::vector<Bump> bumps(4);
  for (auto& b : bumps) {
    b.y = uniform(rng, 0.0, size);
    b.x = uniform(rng, 0.0, size);
    b.sigma = uniform(rng, 0.08, 0.20) * size;
    b.amp = uniform(rng, -0.10, 0.30);
  }
  std::normal_distribution<double> noise(0.0, noise_sigma);
  auto image = torch::empty({size, size}, torch::kFloat32);
  auto acc = image.accessor<float, 2>();
  for (int y = 0; y < size; ++y) {
    for (int x = 0; x < size; ++x) {
      double v = 0.0;
      switch (mask[static_cast<size_t>(y) * size + x]) {
        case 0: {
          v = base.background;
          for (const auto& b : bumps) {
            const double d2 = (y - b.y) * (y - b.y) + (x - b.x) * (x - b.x);
            v += b.amp * std::exp(-0.5 * d2 / (b.sigma * b.sigma));
          }
          break;
        }
        case 1: v = base.ring; break;
        case 2: v = base.disk; break;
        default: v = base.ellipse; break;
      }
      v += noise(rng);
      acc[y][x] = static_cast<float>(std::clamp(v, 0.0, 1.0));
    }
  }
  return image;
}

// Longest-from-start path through an 8-connected skeleton component.
std::vector<int> pick_branch(const std::vector<std::uint8_t>& skel, int h, int w,
                             std::mt19937_64& rng) {
  const int n = h * w;
  std::vector<int> comp(n, -1);
  std::vector<std::vector<int>> components;
  auto neighbors = [&](int idx, auto&& fn) {
    const int y = idx / w, x = idx % w;
    for (int dy = -1; dy <= 1; ++dy) {
      for (int dx = -1; dx <= 1; ++dx) {
        if (!dy && !dx) continue;
        const int ny = y + dy, nx = x + dx;
        if (ny < 0 || ny >= h || nx < 0 || nx >= w) continue;
        const int j = ny * w + nx;
        if (skel[j]) fn(j);
      }
    }
  };
  for (int i = 0; i < n; ++i) {
    if (!skel[i] || comp[i] >= 0) continue;
    const int id = static_cast<int>(components.size());
    components.emplace_back();
    std::deque<int> queue{i};
    comp[i] = id;
    while (!queue.empty()) {
      const int cur = queue.front();
      queue.pop_front();
      components[id].push_back(cur);
      neighbors(cur, [&](int j) {
        if (comp[j] < 0) {
          comp[j] = id;
          queue.push_back(j);
        }
      });
    }
  }
  if (components.empty()) return {};

  const auto& largest = *std::max_element(
      components.begin(), components.end(),
      [](const auto& a, const auto& b) { return a.size() < b.size(); });
  std::vector<int> endpoints;
  for (int idx : largest) {
    int degree = 0;
    neighbors(idx, [&](int) { ++degree; });
    if (degree == 1) endpoints.push_back(idx);
  }
  const auto& pool = endpoints.empty() ? largest : endpoints;
  const int start = pool[std::uniform_int_distribution<size_t>(0, pool.size() - 1)(rng)];

  std::vector<int> parent(n, -2);
  std::deque<int> queue{start};
  parent[start] = -1;
  int last = start;
  while (!queue.empty()) {
    last = queue.front();
    queue.pop_front();
    neighbors(last, [&](int j) {
      if (parent[j] == -2) {
        parent[j] = last;
        queue.push_back(j);
      }
    });
  }
  std::vector<int> path;
  for (int cur = last; cur >= 0; cur = parent[cur]) path.push_back(cur);
  std::reverse(path.begin(), path.end());
  return path;
}

// Straight line through the region centroid at a random angle, kept to
// pixels whose 4-neighbors all belong to the region. Empty when the centroid
// falls outside (rings).
std::vector<int> centroid_chord(const std::vector<std::uint8_t>& region, int h, int w,
                                std::mt19937_64& rng) {
  const double angle = std::uniform_real_distribution<double>(0.0, std::numbers::pi)(rng);
  double sy = 0, sx = 0, count = 0;
  for (int i = 0; i < h * w; ++i) {
    if (!region[i]) continue;
    sy += i / w;
    sx += i % w;
    ++count;
  }
  if (count == 0) return {};
  auto inside = [&](int y, int x) {
    if (y < 1 || x < 1 || y >= h - 1 || x >= w - 1) return false;
    const int i = y * w + x;
    return region[i] && region[i - 1] && region[i + 1] && region[i - w] && region[i + w];
  };
  const double cy = sy / count, cx = sx / count;
  if (!inside(static_cast<int>(std::lround(cy)), static_cast<int>(std::lround(cx)))) return {};

  const double dy = std::sin(angle), dx = std::cos(angle);
  auto walk = [&](double sign) {
    std::vector<int> pts;
    for (double t = 0;; t += 0.5) {
      const int y = static_cast<int>(std::lround(cy + sign * t * dy));
      const int x = static_cast<int>(std::lround(cx + sign * t * dx));
      if (!inside(y, x)) break;
      const int i = y * w + x;
      if (pts.empty() || pts.back() != i) pts.push_back(i);
    }
    return pts;
  };
  auto fwd = walk(1.0), back = walk(-1.0);
  std::vector<int> line(back.rbegin(), back.rend());
  for (size_t i = 1; i < fwd.size(); ++i) line.push_back(fwd[i]);
  return line;
}

float bilinear_at(const torch::TensorAccessor<float, 2>& src, int sh, int sw, double y, double x) {
  y = std::clamp(y, 0.0, static_cast<double>(sh - 1));
  x = std::clamp(x, 0.0, static_cast<double>(sw - 1));
  const int y0 = static_cast<int>(std::floor(y)), x0 = static_cast<int>(std::floor(x));
  const int y1 = std::min(y0 + 1, sh - 1), x1 = std::min(x0 + 1, sw - 1);
  const double fy = y - y0, fx = x - x0;
  const double top = src[y0][x0] * (1 - fx) + src[y0][x1] * fx;
  const double bottom = src[y1][x0] * (1 - fx) + src[y1][x1] * fx;
  return static_cast<float>(top * (1 - fy) + bottom * fy);
}

torch::Tensor gray_to_float(const io::Gray8& g) {
  auto t = torch::empty({g.height, g.width}, torch::kFloat32);
  auto acc = t.accessor<float, 2>();
  for (int y = 0; y < g.height; ++y)
    for (int x = 0; x < g.width; ++x) acc[y][x] = g.at(y, x) / 255.0f;
  return t;
}

torch::Tensor gray_to_labels(const io::Gray8& g, int classes, bool allow_ignore,
                             const std::filesystem::path& file) {
  auto t = torch::empty({g.height, g.width}, torch::kInt64);
  auto acc = t.accessor<int64_t, 2>();
  for (int y = 0; y < g.height; ++y) {
    for (int x = 0; x < g.width; ++x) {
      const int v = g.at(y, x);
      if (allow_ignore && v == kIgnoreFileValue) {
        acc[y][x] = kIgnore;
        continue;
      }
      if (v >= classes) {
        throw Error(fmt::format("class index {} >= {} at ({}, {}) in {}", v, classes, y, x,
                                file.string()));
      }
      acc[y][x] = v;
    }
  }
  return t;
}

io::Gray8 labels_to_gray(const torch::Tensor& labels) {
  io::Gray8 g;
  g.height = static_cast<int>(labels.size(0));
  g.width = static_cast<int>(labels.size(1));
  g.pixels.resize(static_cast<size_t>(g.height) * g.width);
  auto acc = labels.accessor<int64_t, 2>();
  for (int y = 0; y < g.height; ++y) {
    for (int x = 0; x < g.width; ++x) {
      const int64_t v = acc[y][x];
      require(v == kIgnore || (v >= 0 && v < kIgnoreFileValue), "label out of 8-bit range");
      g.pixels[static_cast<size_t>(y) * g.width + x] =
          v == kIgnore ? kIgnoreFileValue : static_cast<std::uint8_t>(v);
    }
  }
  return g;
}

}  // namespace

std::vector<std::uint8_t> skeletonize(std::span<const std::uint8_t> mask, int height, int width) {
  require(mask.size() == static_cast<size_t>(height) * width, "skeletonize: size mismatch");
  std::vector<std::uint8_t> img(mask.begin(), mask.end());
  auto at = [&](int y, int x) -> int {
    if (y < 0 || y >= height || x < 0 || x >= width) return 0;
    return img[static_cast<size_t>(y) * width + x] ? 1 : 0;
  };
  std::vector<size_t> doomed;
  bool changed = true;
  while (changed) {
    changed = false;
    for (int pass = 0; pass < 2; ++pass) {
      doomed.clear();
      for (int y = 0; y < height; ++y) {
        for (int x = 0; x < width; ++x) {
          if (!at(y, x)) continue;
          // P2..P9 clockwise from north.
          const int p[8] = {at(y - 1, x), at(y - 1, x + 1), at(y, x + 1), at(y + 1, x + 1),
                            at(y + 1, x), at(y + 1, x - 1), at(y, x - 1), at(y - 1, x - 1)};
          int b = 0, a = 0;
          for (int i = 0; i < 8; ++i) {
            b += p[i];
            if (!p[i] && p[(i + 1) % 8]) ++a;
          }
          if (b < 2 || b > 6 || a != 1) continue;
          const bool keep = pass == 0 ? (p[0] * p[2] * p[4] != 0 || p[2] * p[4] * p[6] != 0)
                                      : (p[0] * p[2] * p[6] != 0 || p[0] * p[4] * p[6] != 0);
          if (!keep) doomed.push_back(static_cast<size_t>(y) * width + x);
        }
      }
      for (size_t i : doomed) img[i] = 0;
      if (!doomed.empty()) changed = true;
    }
  }
  return img;
}

torch::Tensor scribbles_from_mask(const torch::Tensor& dense, std::uint64_t seed,
                                  double labeled_cap) {
  require(dense.dim() == 2 && dense.scalar_type() == torch::kInt64,
          "scribbles_from_mask expects an int64 [H, W] mask, got " + shape_str(dense));
  require(labeled_cap > 0.0 && labeled_cap <= 1.0, "labeled_cap must be in (0, 1]");
  const int h = static_cast<int>(dense.size(0)), w = static_cast<int>(dense.size(1));
  const auto flat = dense.contiguous();
  const int64_t* labels = flat.data_ptr<int64_t>();
  const int64_t max_cls = flat.max().item<int64_t>();
  require(flat.min().item<int64_t>() >= 0, "dense mask contains negative labels");

  std::vector<int64_t> present;
  for (int64_t c = 0; c <= max_cls; ++c) {
    if (std::any_of(labels, labels + h * w, [c](int64_t v) { return v == c; })) present.push_back(c);
  }
  const auto budget = std::max<size_t>(
      1, static_cast<size_t>(std::floor(labeled_cap * h * w / static_cast<double>(present.size()))));

  auto rng = make_rng(seed, 0x5c1bb1e);
  auto out = torch::full({h, w}, kIgnore, torch::kInt64);
  int64_t* dst = out.data_ptr<int64_t>();
  for (int64_t c : present) {
    std::vector<std::uint8_t> region(static_cast<size_t>(h) * w);
    for (int i = 0; i < h * w; ++i) region[i] = labels[i] == c;
    auto path = pick_branch(skeletonize(region, h, w), h, w, rng);
    // compact blobs thin to a dot; a chord is the better stroke there
    auto chord = centroid_chord(region, h, w, rng);
    if (chord.size() > path.size()) path = std::move(chord);
    if (path.size() > budget) {
      const size_t offset = std::uniform_int_distribution<size_t>(0, path.size() - budget)(rng);
      path = std::vector<int>(path.begin() + offset, path.begin() + offset + budget);
    }
    if (path.empty()) {
      std::vector<int> interior, any;
      for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
          const int i = y * w + x;
          if (!region[i]) continue;
          any.push_back(i);
          const bool inside = y > 0 && y < h - 1 && x > 0 && x < w - 1 && region[i - 1] &&
                              region[i + 1] && region[i - w] && region[i + w];
          if (inside) interior.push_back(i);
        }
      }
      const auto& pool = interior.empty() ? any : interior;
      path.push_back(pool[std::uniform_int_distribution<size_t>(0, pool.size() - 1)(rng)]);
    }
    for (int i : path) dst[i] = c;
  }
  return out;
}

torch::Tensor synthetic_mask(int size, int k, std::uint64_t seed) {
  auto rng = make_rng(seed, 0);
  const auto g = sample_geometry(rng, size, k >= 4);
  const auto mask = paint_mask(g, size, k);
  return torch::from_blob(const_cast<int64_t*>(mask.data()), {size, size}, torch::kInt64).clone();
}

std::vector<Sample> generate_synthetic_dataset(int n, int size, int k, std::uint64_t seed,
                                               const SynthOptions& opts) {
  require(n >= 1, "dataset size must be at least 1");
  require(size >= kMinSynthSize,
          fmt::format("image size {} too small for the synthetic structures (min {})", size,
                      kMinSynthSize));
  require(k >= 2 && k <= 4, "synthetic generator supports 2 to 4 classes");
  require(opts.folds >= 1, "folds must be at least 1");

  std::vector<Sample> out;
  out.reserve(n);
  for (int i = 0; i < n; ++i) {
    const std::uint64_t sample_seed = seed * 1000003ULL + static_cast<std::uint64_t>(i);
    auto rng = make_rng(sample_seed, 0);
    const auto g = sample_geometry(rng, size, k >= 4);
    const auto mask = paint_mask(g, size, k);
    auto render_rng = make_rng(sample_seed, 1);
    Sample s;
    s.id = fmt::format("synth_{:05d}", i);
    s.image = render_image(mask, size, render_rng, opts.noise_sigma);
    s.dense = torch::from_blob(const_cast<int64_t*>(mask.data()), {size, size}, torch::kInt64).clone();
    s.scribble = scribbles_from_mask(*s.dense, sample_seed, opts.scribble_cap);
    s.fold = i % opts.folds;
    out.push_back(std::move(s));
  }
  return out;
}

torch::Tensor resize_bilinear(const torch::Tensor& image, int height, int width) {
  require(image.dim() == 2, "resize_bilinear expects [H, W]");
  const int sh = static_cast<int>(image.size(0)), sw = static_cast<int>(image.size(1));
  if (sh == height && sw == width) return image.clone();
  auto src_t = image.to(torch::kFloat32).contiguous();
  auto src = src_t.accessor<float, 2>();
  auto out = torch::empty({height, width}, torch::kFloat32);
  auto dst = out.accessor<float, 2>();
  const double sy = static_cast<double>(sh) / height, sx = static_cast<double>(sw) / width;
  for (int y = 0; y < height; ++y)
    for (int x = 0; x < width; ++x)
      dst[y][x] = bilinear_at(src, sh, sw, (y + 0.5) * sy - 0.5, (x + 0.5) * sx - 0.5);
  return out;
}

torch::Tensor resize_nearest(const torch::Tensor& labels, int height, int width) {
  require(labels.dim() == 2, "resize_nearest expects [H, W]");
  const int sh = static_cast<int>(labels.size(0)), sw = static_cast<int>(labels.size(1));
  if (sh == height && sw == width) return labels.clone();
  auto src_t = labels.contiguous();
  auto src = src_t.accessor<int64_t, 2>();
  auto out = torch::empty({height, width}, torch::kInt64);
  auto dst = out.accessor<int64_t, 2>();
  for (int y = 0; y < height; ++y) {
    const int ys = std::min(sh - 1, static_cast<int>((y + 0.5) * sh / height));
    for (int x = 0; x < width; ++x) {
      const int xs = std::min(sw - 1, static_cast<int>((x + 0.5) * sw / width));
      dst[y][x] = src[ys][xs];
    }
  }
  return out;
}

std::vector<Sample> load_folder(const std::filesystem::path& dir, const FolderOptions& opts) {
  namespace fs = std::filesystem;
  const fs::path images_dir = dir / "images";
  require(fs::is_directory(images_dir), "missing image directory " + images_dir.string());
  require(opts.folds >= 1, "folds must be at least 1");

  std::vector<fs::path> files;
  for (const auto& e : fs::directory_iterator(images_dir)) {
    if (e.is_regular_file() && e.path().extension() == ".png") files.push_back(e.path());
  }
  std::sort(files.begin(), files.end());

  std::vector<Sample> out;
  for (size_t i = 0; i < files.size(); ++i) {
    const auto& img_path = files[i];
    const std::string id = img_path.stem().string();
    const fs::path scribble_path = dir / "scribbles" / (id + ".png");
    if (!fs::exists(scribble_path)) {
      throw Error("missing scribble for " + img_path.string() + " (expected " +
                  scribble_path.string() + ")");
    }
    const auto gray = io::read_png_gray(img_path);
    const auto scrib = io::read_png_gray(scribble_path);
    require(gray.height == scrib.height && gray.width == scrib.width,
            "image and scribble sizes differ for " + id);
    Sample s;
    s.id = id;
    s.fold = static_cast<int>(i % opts.folds);
    const int h = opts.size > 0 ? opts.size : gray.height;
    const int w = opts.size > 0 ? opts.size : gray.width;
    s.image = resize_bilinear(gray_to_float(gray), h, w);
    s.scribble = resize_nearest(gray_to_labels(scrib, opts.classes, true, scribble_path), h, w);
    const fs::path mask_path = dir / "masks" / (id + ".png");
    if (fs::exists(mask_path)) {
      const auto m = io::read_png_gray(mask_path);
      require(m.height == gray.height && m.width == gray.width,
              "image and mask sizes differ for " + id);
      s.dense = resize_nearest(gray_to_labels(m, opts.classes, false, mask_path), h, w);
    }
    out.push_back(std::move(s));
  }
  require(!out.empty(), "no images found in " + images_dir.string());
  return out;
}

void write_folder(std::span<const Sample> samples, const std::filesystem::path& dir) {
  namespace fs = std::filesystem;
  fs::create_directories(dir / "images");
  fs::create_directories(dir / "scribbles");
  for (const auto& s : samples) {
    io::Gray8 g;
    g.height = s.height();
    g.width = s.width();
    g.pixels.resize(static_cast<size_t>(g.height) * g.width);
    auto img = s.image.contiguous();
    auto acc = img.accessor<float, 2>();
    for (int y = 0; y < g.height; ++y)
      for (int x = 0; x < g.width; ++x)
        g.pixels[static_cast<size_t>(y) * g.width + x] =
            static_cast<std::uint8_t>(std::lround(std::clamp(acc[y][x], 0.0f, 1.0f) * 255.0f));
    io::write_png_gray(dir / "images" / (s.id + ".png"), g);
    io::write_png_gray(dir / "scribbles" / (s.id + ".png"), labels_to_gray(s.scribble));
    if (s.dense) {
      fs::create_directories(dir / "masks");
      io::write_png_gray(dir / "masks" / (s.id + ".png"), labels_to_gray(*s.dense));
    }
  }
}

double labeled_fraction(const torch::Tensor& scribble) {
  return scribble.ne(kIgnore).to(torch::kFloat64).mean().item<double>();
}

Batch collate(std::span<const Sample> samples, std::span<const size_t> indices) {
  require(!indices.empty(), "cannot collate an empty batch");
  Batch b;
  std::vector<torch::Tensor> images, scribbles, dense;
  bool all_dense = true;
  const auto& first = samples[indices[0]];
  for (size_t i : indices) {
    const auto& s = samples[i];
    require(s.height() == first.height() && s.width() == first.width(),
            "batch samples must share H x W");
    b.ids.push_back(s.id);
    images.push_back(s.image);
    scribbles.push_back(s.scribble);
    if (s.dense) dense.push_back(*s.dense);
    else all_dense = false;
  }
  b.images = torch::stack(images);
  b.scribbles = torch::stack(scribbles);
  if (all_dense) b.dense = torch::stack(dense);
  return b;
}

BatchStream::BatchStream(std::span<const Sample> samples, int batch_size, std::uint64_t seed,
                         bool training)
    : samples_(samples), batch_size_(batch_size), seed_(seed), training_(training) {
  require(!samples.empty(), "dataset is empty");
  if (training) {
    require(batch_size >= 2, "training batch size must be at least 2 (mixing needs partners)");
    require(samples.size() >= static_cast<size_t>(batch_size),
            fmt::format("dataset has {} samples, fewer than batch size {}", samples.size(),
                        batch_size));
  } else {
    require(batch_size >= 1, "batch size must be positive");
  }
}

std::vector<std::vector<size_t>> BatchStream::epoch_indices(int epoch) const {
  std::vector<size_t> order(samples_.size());
  for (size_t i = 0; i < order.size(); ++i) order[i] = i;
  auto rng = make_rng(seed_, 0xba7c4000ULL + static_cast<std::uint64_t>(epoch));
  for (size_t i = order.size(); i > 1; --i) {
    const size_t j = std::uniform_int_distribution<size_t>(0, i - 1)(rng);
    std::swap(order[i - 1], order[j]);
  }
  std::vector<std::vector<size_t>> batches;
  for (size_t start = 0; start < order.size(); start += batch_size_) {
    const size_t end = std::min(order.size(), start + static_cast<size_t>(batch_size_));
    if (training_ && end - start < static_cast<size_t>(batch_size_)) break;
    batches.emplace_back(order.begin() + start, order.begin() + end);
  }
  return batches;
}

size_t BatchStream::batches_per_epoch() const {
  const size_t n = samples_.size(), b = static_cast<size_t>(batch_size_);
  return training_ ? n / b : (n + b - 1) / b;
}

Batch BatchStream::next() {
  if (current_.empty() && cursor_ == 0) current_ = epoch_indices(epoch_);
  if (cursor_ >= current_.size()) {
    ++epoch_;
    cursor_ = 0;
    current_ = epoch_indices(epoch_);
  }
  return collate(samples_, current_[cursor_++]);
}

std::pair<std::vector<Sample>, std::vector<Sample>> split_by_fold(std::span<const Sample> samples,
                                                                  int held_out_fold) {
  std::pair<std::vector<Sample>, std::vector<Sample>> out;
  for (const auto& s : samples) (s.fold == held_out_fold ? out.second : out.first).push_back(s);
  return out;
}

}  // namespace pclmix::data
