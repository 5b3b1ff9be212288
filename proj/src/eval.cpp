#include "pclmix/eval.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <fmt/format.h>
#include <fstream>
#include <limits>
#include <thread>

#include "pclmix/image_io.hpp"
#include "pclmix/plot.hpp"
#include "pclmix/trainer.hpp"

namespace pclmix::eval {
namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();
constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

struct BinaryPair {
  int height = 0, width = 0;
  std::vector<std::uint8_t> a, b;
};

BinaryPair binarize(const torch::Tensor& pred, const torch::Tensor& gt, int64_t cls) {
  require(pred.dim() == 2 && pred.sizes() == gt.sizes(),
          "metric inputs must be equally sized [H, W] maps: " + shape_str(pred) + " vs " +
              shape_str(gt));
  BinaryPair out;
  out.height = static_cast<int>(pred.size(0));
  out.width = static_cast<int>(pred.size(1));
  auto p = pred.to(torch::kInt64).contiguous();
  auto g = gt.to(torch::kInt64).contiguous();
  const auto* pp = p.data_ptr<int64_t>();
  const auto* gp = g.data_ptr<int64_t>();
  const size_t n = static_cast<size_t>(out.height) * out.width;
  out.a.resize(n);
  out.b.resize(n);
  for (size_t i = 0; i < n; ++i) {
    out.a[i] = pp[i] == cls;
    out.b[i] = gp[i] == cls;
  }
  return out;
}

// 1-D lower envelope of parabolas rooted at finite entries of f.
void distance_1d(const std::vector<double>& f, std::vector<double>& d, std::vector<int>& v,
                 std::vector<double>& z) {
  const int n = static_cast<int>(f.size());
  int k = -1;
  for (int q = 0; q < n; ++q) {
    if (!std::isfinite(f[q])) continue;
    if (k < 0) {
      k = 0;
      v[0] = q;
      z[0] = -kInf;
      z[1] = kInf;
      continue;
    }
    double s = ((f[q] + double(q) * q) - (f[v[k]] + double(v[k]) * v[k])) / (2.0 * q - 2.0 * v[k]);
    while (s <= z[k]) {
      --k;
      s = ((f[q] + double(q) * q) - (f[v[k]] + double(v[k]) * v[k])) / (2.0 * q - 2.0 * v[k]);
    }
    ++k;
    v[k] = q;
    z[k] = s;
    z[k + 1] = kInf;
  }
  if (k < 0) {
    std::fill(d.begin(), d.end(), kInf);
    return;
  }
  k = 0;
  for (int q = 0; q < n; ++q) {
    while (z[k + 1] < q) ++k;
    const double dq = q - v[k];
    d[q] = dq * dq + f[v[k]];
  }
}

double directed_pool_percentile(const BinaryPair& m) {
  const bool a_empty = std::none_of(m.a.begin(), m.a.end(), [](auto v) { return v != 0; });
  const bool b_empty = std::none_of(m.b.begin(), m.b.end(), [](auto v) { return v != 0; });
  if (a_empty && b_empty) return 0.0;
  if (a_empty || b_empty) return std::hypot(double(m.height), double(m.width));
  const auto ba = boundary(m.a, m.height, m.width);
  const auto bb = boundary(m.b, m.height, m.width);
  const auto da = squared_distance_transform(ba, m.height, m.width);
  const auto db = squared_distance_transform(bb, m.height, m.width);
  std::vector<double> pooled;
  for (size_t i = 0; i < ba.size(); ++i) {
    if (ba[i]) pooled.push_back(std::sqrt(db[i]));
    if (bb[i]) pooled.push_back(std::sqrt(da[i]));
  }
  return percentile(std::move(pooled), 95.0);
}

template <typename Fn>
void run_parallel(size_t count, int jobs, Fn&& fn) {
  if (jobs <= 1 || count <= 1) {
    for (size_t i = 0; i < count; ++i) fn(i);
    return;
  }
  std::atomic<size_t> next{0};
  std::vector<std::exception_ptr> errors(count);
  std::vector<std::thread> workers;
  for (int w = 0; w < std::min<int>(jobs, static_cast<int>(count)); ++w) {
    workers.emplace_back([&] {
      for (size_t i = next++; i < count; i = next++) {
        try {
          fn(i);
        } catch (...) {
          errors[i] = std::current_exception();
        }
      }
    });
  }
  for (auto& t : workers) t.join();
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);
}

std::string format_value(double v) { return std::isfinite(v) ? fmt::format("{:.6f}", v) : "nan"; }

constexpr const char* kConventions =
    "# dice: both masks empty = 1, exactly one empty = 0\n"
    "# hd95 (pixels): 95th percentile with linear interpolation of pooled directed "
    "4-adjacency boundary distances; both empty = 0, exactly one empty = image diagonal\n";

ExperimentRow run_experiment(std::span<const data::Sample> train,
                             std::span<const data::Sample> val, config::RunConfig cfg,
                             const std::string& label, const std::string& dir_name,
                             const std::filesystem::path& out_dir) {
  cfg.sync_seed();
  cfg.tag = dir_name;
  const auto run_dir = out_dir / dir_name;
  std::filesystem::create_directories(run_dir);
  config::save_file(run_dir / "config.snapshot", cfg);
  auto result = trainer::train(train, cfg.net, cfg.train, run_dir);
  ExperimentRow row{label, dir_name, cfg, evaluate(result.net, val)};
  write_metrics_csv(run_dir / "metrics.csv", label, row.metrics);
  return row;
}

}  // namespace

double dice(const torch::Tensor& pred, const torch::Tensor& gt, int64_t cls) {
  const auto m = binarize(pred, gt, cls);
  int64_t inter = 0, na = 0, nb = 0;
  for (size_t i = 0; i < m.a.size(); ++i) {
    na += m.a[i];
    nb += m.b[i];
    inter += m.a[i] & m.b[i];
  }
  if (na + nb == 0) return 1.0;
  return 2.0 * static_cast<double>(inter) / static_cast<double>(na + nb);
}

double hd95(const torch::Tensor& pred, const torch::Tensor& gt, int64_t cls) {
  return directed_pool_percentile(binarize(pred, gt, cls));
}

std::vector<std::uint8_t> boundary(std::span<const std::uint8_t> mask, int height, int width) {
  std::vector<std::uint8_t> out(mask.size(), 0);
  auto at = [&](int y, int x) { return mask[static_cast<size_t>(y) * width + x] != 0; };
  for (int y = 0; y < height; ++y) {
    for (int x = 0; x < width; ++x) {
      if (!at(y, x)) continue;
      const bool edge = y == 0 || x == 0 || y == height - 1 || x == width - 1;
      if (edge || !at(y - 1, x) || !at(y + 1, x) || !at(y, x - 1) || !at(y, x + 1)) {
        out[static_cast<size_t>(y) * width + x] = 1;
      }
    }
  }
  return out;
}

std::vector<double> squared_distance_transform(std::span<const std::uint8_t> sites, int height,
                                               int width) {
  require(sites.size() == static_cast<size_t>(height) * width, "distance transform size mismatch");
  std::vector<double> grid(sites.size());
  for (size_t i = 0; i < sites.size(); ++i) grid[i] = sites[i] ? 0.0 : kInf;
  const int n = std::max(height, width);
  std::vector<double> f, d;
  std::vector<int> v(n);
  std::vector<double> z(n + 1);
  f.resize(height);
  d.resize(height);
  for (int x = 0; x < width; ++x) {
    for (int y = 0; y < height; ++y) f[y] = grid[static_cast<size_t>(y) * width + x];
    distance_1d(f, d, v, z);
    for (int y = 0; y < height; ++y) grid[static_cast<size_t>(y) * width + x] = d[y];
  }
  f.resize(width);
  d.resize(width);
  for (int y = 0; y < height; ++y) {
    std::copy_n(grid.begin() + static_cast<ptrdiff_t>(y) * width, width, f.begin());
    distance_1d(f, d, v, z);
    std::copy_n(d.begin(), width, grid.begin() + static_cast<ptrdiff_t>(y) * width);
  }
  return grid;
}

double percentile(std::vector<double> values, double q) {
  require(!values.empty(), "percentile of an empty set");
  require(q >= 0 && q <= 100, "percentile must lie in [0, 100]");
  std::sort(values.begin(), values.end());
  const double pos = q / 100.0 * static_cast<double>(values.size() - 1);
  const auto lo = static_cast<size_t>(std::floor(pos));
  const auto hi = static_cast<size_t>(std::ceil(pos));
  return values[lo] + (pos - static_cast<double>(lo)) * (values[hi] - values[lo]);
}

Summary Summary::of(std::span<const double> values) {
  Summary s;
  double sum = 0;
  for (double v : values) {
    if (std::isnan(v)) continue;
    sum += v;
    ++s.count;
  }
  if (s.count == 0) {
    s.mean = s.std = kNaN;
    return s;
  }
  s.mean = sum / s.count;
  double sq = 0;
  for (double v : values)
    if (!std::isnan(v)) sq += (v - s.mean) * (v - s.mean);
  s.std = std::sqrt(sq / s.count);
  return s;
}

std::vector<std::pair<int64_t, std::string>> class_layout(int classes) {
  if (classes == 4) return {{3, "RV"}, {1, "Myo"}, {2, "LV"}};
  if (classes == 3) return {{1, "Myo"}, {2, "LV"}};
  std::vector<std::pair<int64_t, std::string>> out;
  for (int c = 1; c < classes; ++c) out.emplace_back(c, fmt::format("class{}", c));
  return out;
}

MetricTable summarize(std::vector<SampleMetrics> samples, int classes) {
  MetricTable t;
  std::vector<double> avg_dice, avg_hd;
  for (const auto& s : samples) {
    double sd = 0, sh = 0;
    int n = 0;
    for (int c = 1; c < classes; ++c) {
      if (std::isnan(s.dice[c])) continue;
      sd += s.dice[c];
      sh += s.hd95[c];
      ++n;
    }
    avg_dice.push_back(n ? sd / n : kNaN);
    avg_hd.push_back(n ? sh / n : kNaN);
  }
  for (const auto& [cls, name] : class_layout(classes)) {
    std::vector<double> d, h;
    for (const auto& s : samples) {
      d.push_back(s.dice[cls]);
      h.push_back(s.hd95[cls]);
    }
    t.classes.push_back({cls, name, Summary::of(d), Summary::of(h)});
  }
  t.avg_dice = Summary::of(avg_dice);
  t.avg_hd95 = Summary::of(avg_hd);
  t.samples = std::move(samples);
  return t;
}

MetricTable evaluate(model::SegNet& net, std::span<const data::Sample> samples, int batch_size) {
  require(batch_size >= 1, "batch size must be positive");
  const int classes = net->config().classes;
  net->eval();
  std::vector<size_t> scored;
  for (size_t i = 0; i < samples.size(); ++i)
    if (samples[i].dense) scored.push_back(i);
  require(!scored.empty(), "evaluation needs samples with dense masks");

  std::vector<SampleMetrics> per_sample;
  for (size_t start = 0; start < scored.size(); start += batch_size) {
    const size_t end = std::min(scored.size(), start + static_cast<size_t>(batch_size));
    const std::span<const size_t> idx(scored.data() + start, end - start);
    const auto batch = data::collate(samples, idx);
    const auto labels = net->infer(batch.images);
    for (size_t j = 0; j < idx.size(); ++j) {
      const auto& s = samples[idx[j]];
      SampleMetrics m{s.id, std::vector<double>(classes, kNaN), std::vector<double>(classes, kNaN)};
      const auto pred = labels[static_cast<int64_t>(j)];
      for (int c = 1; c < classes; ++c) {
        if (!s.dense->eq(c).any().item<bool>()) continue;
        m.dice[c] = dice(pred, *s.dense, c);
        m.hd95[c] = hd95(pred, *s.dense, c);
      }
      per_sample.push_back(std::move(m));
    }
  }
  return summarize(std::move(per_sample), classes);
}

std::string table_csv_header(const MetricTable& t) {
  std::string h = "label";
  auto add = [&](const std::string& name) {
    h += fmt::format(",{0}_dice,{0}_dice_std,{0}_hd95,{0}_hd95_std", name);
  };
  for (const auto& c : t.classes) add(c.name);
  add("Avg");
  return h;
}

std::string table_csv_row(const std::string& label, const MetricTable& t) {
  std::string r = label;
  auto add = [&](const Summary& d, const Summary& h) {
    r += "," + format_value(d.mean) + "," + format_value(d.std) + "," + format_value(h.mean) + "," +
         format_value(h.std);
  };
  for (const auto& c : t.classes) add(c.dice, c.hd95);
  add(t.avg_dice, t.avg_hd95);
  return r;
}

void write_metrics_csv(const std::filesystem::path& path, const std::string& label,
                       const MetricTable& t) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw Error("cannot write " + path.string());
  out << kConventions << table_csv_header(t) << "\n" << table_csv_row(label, t) << "\n";
}

CrossValidation cross_validate(std::span<const data::Sample> dataset, int folds,
                               const config::RunConfig& cfg, const std::filesystem::path& out_dir) {
  require(folds >= 2, "cross validation needs at least 2 folds");
  CrossValidation cv;
  std::vector<SampleMetrics> pooled;
  for (int i = 0; i < folds; ++i) {
    std::vector<data::Sample> train, held_out;
    for (const auto& s : dataset) (s.fold % folds == i ? held_out : train).push_back(s);
    require(!held_out.empty() && !train.empty(), fmt::format("fold {} is empty", i));
    auto run_cfg = cfg;
    run_cfg.sync_seed();
    const auto run_dir = out_dir.empty() ? std::filesystem::path{} : out_dir / fmt::format("fold_{}", i);
    if (!run_dir.empty()) {
      std::filesystem::create_directories(run_dir);
      config::save_file(run_dir / "config.snapshot", run_cfg);
    }
    auto result = trainer::train(train, run_cfg.net, run_cfg.train, run_dir);
    auto table = evaluate(result.net, held_out);
    if (!run_dir.empty()) write_metrics_csv(run_dir / "metrics.csv", fmt::format("fold_{}", i), table);
    pooled.insert(pooled.end(), table.samples.begin(), table.samples.end());
    cv.folds.push_back(std::move(table));
  }
  cv.pooled = summarize(std::move(pooled), cfg.net.classes);
  if (!out_dir.empty()) {
    std::ofstream out(out_dir / "metrics.csv", std::ios::trunc);
    out << kConventions << table_csv_header(cv.pooled) << "\n";
    for (int i = 0; i < folds; ++i) out << table_csv_row(fmt::format("fold_{}", i), cv.folds[i]) << "\n";
    out << table_csv_row("pooled", cv.pooled) << "\n";
  }
  return cv;
}

std::vector<std::pair<std::string, trainer::AblationFlags>> ablation_configs() {
  using F = trainer::AblationFlags;
  return {
      {"#1", F{false, false, false, true}},
      {"#2", F{true, false, false, true}},
      {"#3", F{false, true, false, true}},
      {"#4", F{false, true, true, true}},
      {"#5", F{true, true, false, true}},
      {"#6 (w/o tf)", F{true, true, true, false}},
      {"#7", F{true, true, true, true}},
  };
}

std::vector<ExperimentRow> ablate(std::span<const data::Sample> train,
                                  std::span<const data::Sample> val,
                                  const config::RunConfig& base,
                                  const std::filesystem::path& out_dir) {
  const auto configs = ablation_configs();
  std::vector<ExperimentRow> rows(configs.size());
  run_parallel(configs.size(), base.jobs, [&](size_t i) {
    auto cfg = base;
    cfg.train.flags = configs[i].second;
    rows[i] = run_experiment(train, val, cfg, configs[i].first, fmt::format("v{}", i + 1), out_dir);
  });

  std::ofstream out(out_dir / "ablation.csv", std::ios::trunc);
  if (!out) throw Error("cannot write ablation.csv");
  const auto metrics_header = table_csv_header(rows.front().metrics);
  out << kConventions << "version,l_sup,l_ctr,l_het,l_mix,tf_sup,dir"
      << metrics_header.substr(std::string("label").size()) << "\n";
  for (const auto& r : rows) {
    const auto& f = r.cfg.train.flags;
    const auto metrics = table_csv_row("", r.metrics);
    out << fmt::format("{},1,{},{},{},{},{}{}\n", r.label, int(f.use_ctr), int(f.use_het),
                       int(f.use_mix), int(f.use_aux_decoder_sup), r.dir, metrics);
  }
  return rows;
}

std::vector<ExperimentRow> sweep(std::span<const data::Sample> train,
                                 std::span<const data::Sample> val, const config::RunConfig& base,
                                 const std::string& param, std::vector<double> values,
                                 const std::filesystem::path& out_dir) {
  require(param == "lambda_t" || param == "lambda_ctr",
          "sweep parameter must be lambda_t or lambda_ctr, got " + param);
  if (values.empty()) values = param == "lambda_t" ? kLambdaTGrid : kLambdaCtrGrid;
  std::vector<ExperimentRow> rows(values.size());
  run_parallel(values.size(), base.jobs, [&](size_t i) {
    auto cfg = base;
    config::set_value(cfg, param, fmt::format("{}", values[i]));
    const auto name = fmt::format("{}_{}", param, values[i]);
    rows[i] = run_experiment(train, val, cfg, fmt::format("{}", values[i]), name, out_dir);
  });

  std::ofstream out(out_dir / "sweep.csv", std::ios::trunc);
  if (!out) throw Error("cannot write sweep.csv");
  out << kConventions << param << table_csv_header(rows.front().metrics).substr(std::string("label").size())
      << "\n";
  for (const auto& r : rows) out << table_csv_row(r.label, r.metrics) << "\n";

  std::vector<plot::Series> series;
  const auto& layout = rows.front().metrics.classes;
  for (size_t c = 0; c <= layout.size(); ++c) {
    plot::Series s{c < layout.size() ? layout[c].name : "Avg", {}, {},
                   plot::kPalette[c % plot::kPalette.size()]};
    for (size_t i = 0; i < rows.size(); ++i) {
      s.x.push_back(values[i]);
      s.y.push_back(c < layout.size() ? rows[i].metrics.classes[c].dice.mean
                                      : rows[i].metrics.avg_dice.mean);
    }
    series.push_back(std::move(s));
  }
  plot::write_line_chart(out_dir / "sweep.png", series);
  return rows;
}

void write_prediction_png(const std::filesystem::path& path, const torch::Tensor& image,
                          const torch::Tensor& labels) {
  require(image.dim() == 2 && labels.sizes() == image.sizes(), "overlay expects matching [H, W] maps");
  static constexpr std::array<plot::Color, 4> kColors{{{0, 0, 0}, {44, 160, 44}, {31, 119, 180},
                                                       {214, 39, 40}}};
  auto img = image.to(torch::kFloat32).contiguous();
  auto lab = labels.to(torch::kInt64).contiguous();
  io::Rgb8 out;
  out.height = static_cast<int>(image.size(0));
  out.width = static_cast<int>(image.size(1));
  out.pixels.resize(static_cast<size_t>(out.height) * out.width * 3);
  const auto* ip = img.data_ptr<float>();
  const auto* lp = lab.data_ptr<int64_t>();
  for (int64_t i = 0; i < img.numel(); ++i) {
    const double gray = std::clamp(ip[i], 0.0f, 1.0f) * 255.0;
    for (int ch = 0; ch < 3; ++ch) {
      double v = gray;
      if (lp[i] > 0) {
        const auto& c = kColors[static_cast<size_t>(lp[i]) % kColors.size()];
        v = 0.45 * gray + 0.55 * c[ch];
      }
      out.pixels[static_cast<size_t>(i) * 3 + ch] = static_cast<std::uint8_t>(std::lround(v));
    }
  }
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  io::write_png_rgb(path, out);
}

}  // namespace pclmix::eval
