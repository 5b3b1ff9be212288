#include "pclmix/cli.hpp"

#include <CLI11.hpp>

#include <chrono>
#include <fmt/chrono.h>
#include <fmt/format.h>
#include <fstream>
#include <iostream>
#include <optional>

#include "pclmix/checkpoint.hpp"
#include "pclmix/eval.hpp"
#include "pclmix/trainer.hpp"

namespace pclmix::cli {
namespace {

namespace fs = std::filesystem;

struct Common {
  std::optional<std::uint64_t> seed;
  std::string config_path;
  std::string out;
  std::vector<std::string> overrides;
  std::string tag;
  std::optional<int> jobs;
};

void add_common(CLI::App* cmd, Common& c, const std::string& out_help) {
  cmd->add_option("--seed", c.seed, "random seed");
  cmd->add_option("--config", c.config_path, "key=value config file");
  cmd->add_option("--out", c.out, out_help);
  cmd->add_option("--set", c.overrides, "config override key=value (repeatable)");
  cmd->add_option("--tag", c.tag, "run directory tag");
  cmd->add_option("--jobs", c.jobs, "concurrent runs for ablate/sweep");
}

// Config file, then --set, then dedicated flags.
config::RunConfig resolve(const Common& c) {
  config::RunConfig cfg;
  if (!c.config_path.empty()) {
    if (!fs::exists(c.config_path)) throw Error("config file not found: " + c.config_path);
    cfg = config::load_file(c.config_path);
  }
  for (const auto& kv : c.overrides) {
    const auto eq = kv.find('=');
    if (eq == std::string::npos) throw Error("--set expects key=value, got '" + kv + "'");
    config::set_value(cfg, kv.substr(0, eq), kv.substr(eq + 1));
  }
  if (c.seed) config::set_value(cfg, "seed", std::to_string(*c.seed));
  if (!c.out.empty()) cfg.out_dir = c.out;
  if (!c.tag.empty()) cfg.tag = c.tag;
  if (c.jobs) cfg.jobs = *c.jobs;
  cfg.sync_seed();
  return cfg;
}

std::uint64_t fnv1a(const fs::path& file) {
  std::ifstream in(file, std::ios::binary);
  std::uint64_t h = 1469598103934665603ull;
  char buf[4096];
  while (in.read(buf, sizeof buf) || in.gcount() > 0) {
    for (std::streamsize i = 0; i < in.gcount(); ++i) {
      h ^= static_cast<unsigned char>(buf[i]);
      h *= 1099511628211ull;
    }
  }
  return h;
}

void split(const config::RunConfig& cfg, const std::vector<data::Sample>& all,
           std::vector<data::Sample>& train, std::vector<data::Sample>& val) {
  if (cfg.val_fold < 0) {
    train = all;
    val.clear();
    return;
  }
  std::tie(train, val) = data::split_by_fold(all, cfg.val_fold);
  require(!train.empty(), fmt::format("no training samples outside fold {}", cfg.val_fold));
}

trainer::ProgressFn printer(int total) {
  const int every = std::max(1, total / 20);
  return [every, total](const trainer::LogRow& r) {
    if (r.iter % every != 0 && r.iter != total) return;
    std::cout << fmt::format("iter={} lr={:.5f} sup={:.4f} ctr={:.4f} het={:.4f} mix={:.4f} total={:.4f}\n",
                             r.iter, r.lr, r.loss.sup, r.loss.ctr, r.loss.het, r.loss.mix,
                             r.loss.total)
              << std::flush;
  };
}

void print_table(const std::string& label, const eval::MetricTable& t) {
  std::cout << label;
  for (const auto& c : t.classes)
    std::cout << fmt::format(" {}_dice={:.4f} {}_hd95={:.3f}", c.name, c.dice.mean, c.name, c.hd95.mean);
  std::cout << fmt::format(" avg_dice={:.4f} avg_hd95={:.3f}\n", t.avg_dice.mean, t.avg_hd95.mean);
}

fs::path prepare_run_dir(const config::RunConfig& cfg) {
  const auto dir = make_run_dir(cfg.out_dir, cfg.tag);
  config::save_file(dir / "config.snapshot", cfg);
  return dir;
}

int cmd_gen_data(const Common& common, int n, int size, int classes, int folds) {
  auto cfg = resolve(common);
  if (n > 0) cfg.synth_n = n;
  if (size > 0) cfg.image_size = size;
  if (classes > 0) cfg.net.classes = classes;
  if (folds > 0) cfg.folds = folds;
  // the generator seed is the run seed here
  if (common.seed) cfg.data_seed = *common.seed;
  const fs::path dir = common.out.empty() ? fs::path("data") : fs::path(common.out);

  data::SynthOptions opts;
  opts.folds = cfg.folds;
  const auto samples =
      data::generate_synthetic_dataset(cfg.synth_n, cfg.image_size, cfg.net.classes, cfg.data_seed, opts);
  data::write_folder(samples, dir);

  std::ofstream m(dir / "manifest.txt", std::ios::trunc);
  if (!m) throw Error("cannot write manifest in " + dir.string());
  m << "generator=synthetic\n"
    << "n=" << cfg.synth_n << "\nsize=" << cfg.image_size << "\nclasses=" << cfg.net.classes
    << "\nseed=" << cfg.data_seed << "\nfolds=" << cfg.folds << "\nnoise_sigma=" << opts.noise_sigma
    << "\nscribble_cap=" << opts.scribble_cap << "\nignore_value=" << kIgnoreFileValue << "\n";
  double labeled = 0;
  for (const auto& s : samples) labeled += data::labeled_fraction(s.scribble);
  m << fmt::format("mean_labeled_fraction={:.6f}\n", labeled / samples.size());
  for (const auto& s : samples) {
    for (const char* sub : {"images", "scribbles", "masks"}) {
      const auto f = dir / sub / (s.id + ".png");
      if (fs::exists(f)) m << fmt::format("file {}/{}.png fold={} fnv1a={:016x}\n", sub, s.id, s.fold, fnv1a(f));
    }
  }
  std::cout << "data_dir=" << dir.string() << "\n";
  return 0;
}

int cmd_train(const Common& common, std::optional<int> iters, const std::string& data_dir) {
  auto cfg = resolve(common);
  if (iters) cfg.train.total_iters = *iters;
  if (!data_dir.empty()) cfg.data_dir = data_dir;
  cfg.train.validate();

  const auto all = load_dataset(cfg);
  std::vector<data::Sample> train, val;
  split(cfg, all, train, val);
  const auto dir = prepare_run_dir(cfg);
  std::cout << "run_dir=" << dir.string() << "\n" << std::flush;
  auto result = trainer::train(train, cfg.net, cfg.train, dir, printer(cfg.train.total_iters));
  if (!val.empty()) {
    const auto table = eval::evaluate(result.net, val);
    eval::write_metrics_csv(dir / "metrics.csv", cfg.tag, table);
    print_table("val", table);
  }
  return 0;
}

int cmd_eval(const Common& common, const std::string& ckpt, const std::string& data_dir, int cv_folds,
             int export_n) {
  auto cfg = resolve(common);
  if (!data_dir.empty()) cfg.data_dir = data_dir;
  const auto all = load_dataset(cfg);

  if (cv_folds > 0) {
    const auto dir = prepare_run_dir(cfg);
    std::cout << "run_dir=" << dir.string() << "\n" << std::flush;
    const auto cv = eval::cross_validate(all, cv_folds, cfg, dir);
    for (size_t i = 0; i < cv.folds.size(); ++i) print_table(fmt::format("fold_{}", i), cv.folds[i]);
    print_table("pooled", cv.pooled);
    return 0;
  }

  if (ckpt.empty()) throw Error("eval needs --ckpt <file> or --cv <folds>");
  if (!fs::exists(ckpt)) throw Error("checkpoint not found: " + ckpt);
  auto loaded = checkpoint::load(ckpt);
  require(loaded.net->config().classes == cfg.net.classes || !cfg.data_dir.empty(),
          "checkpoint class count differs from the configured dataset");
  cfg.net = loaded.net->config();

  std::vector<data::Sample> train, val;
  split(cfg, all, train, val);
  const auto& scored = val.empty() ? all : val;
  const auto dir = prepare_run_dir(cfg);
  std::cout << "run_dir=" << dir.string() << "\n" << std::flush;
  const auto table = eval::evaluate(loaded.net, scored);
  eval::write_metrics_csv(dir / "metrics.csv", fs::path(ckpt).filename().string(), table);

  std::ofstream per(dir / "per_sample.csv", std::ios::trunc);
  per << "id";
  for (const auto& c : table.classes) per << "," << c.name << "_dice," << c.name << "_hd95";
  per << "\n";
  for (const auto& s : table.samples) {
    per << s.id;
    for (const auto& c : table.classes) per << fmt::format(",{},{}", s.dice[c.cls], s.hd95[c.cls]);
    per << "\n";
  }
  for (int i = 0; i < std::min<int>(export_n, static_cast<int>(scored.size())); ++i) {
    const auto& s = scored[i];
    eval::write_prediction_png(dir / "predictions" / (s.id + ".png"), s.image, loaded.net->infer(s.image));
  }
  print_table("eval", table);
  return 0;
}

int cmd_ablate(const Common& common, std::optional<int> iters) {
  auto cfg = resolve(common);
  if (common.tag.empty()) cfg.tag = "ablate";
  if (iters) cfg.train.total_iters = *iters;
  cfg.train.validate();
  const auto all = load_dataset(cfg);
  std::vector<data::Sample> train, val;
  split(cfg, all, train, val);
  require(!val.empty(), "ablate needs a held-out fold (val_fold >= 0)");
  const auto dir = prepare_run_dir(cfg);
  std::cout << "run_dir=" << dir.string() << "\n" << std::flush;
  for (const auto& row : eval::ablate(train, val, cfg, dir)) print_table(row.label, row.metrics);
  return 0;
}

int cmd_sweep(const Common& common, const std::string& param, const std::vector<double>& values,
              std::optional<int> iters) {
  auto cfg = resolve(common);
  if (common.tag.empty()) cfg.tag = "sweep_" + param;
  if (iters) cfg.train.total_iters = *iters;
  cfg.train.validate();
  const auto all = load_dataset(cfg);
  std::vector<data::Sample> train, val;
  split(cfg, all, train, val);
  require(!val.empty(), "sweep needs a held-out fold (val_fold >= 0)");
  const auto dir = prepare_run_dir(cfg);
  std::cout << "run_dir=" << dir.string() << "\n" << std::flush;
  for (const auto& row : eval::sweep(train, val, cfg, param, values, dir))
    print_table(param + "=" + row.label, row.metrics);
  return 0;
}

std::string one_line(std::string s) {
  for (auto& ch : s)
    if (ch == '\n' || ch == '\r') ch = ' ';
  return s;
}

}  // namespace

fs::path make_run_dir(const fs::path& out, const std::string& tag) {
  const auto now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  const auto base = fmt::format("{:%Y%m%dT%H%M%SZ}_{}", fmt::gmtime(now), tag);
  fs::create_directories(out);
  fs::path dir = out / base;
  for (int i = 2; !fs::create_directory(dir); ++i) dir = out / fmt::format("{}_{}", base, i);
  return dir;
}

std::vector<data::Sample> load_dataset(const config::RunConfig& cfg) {
  if (!cfg.data_dir.empty()) {
    if (!fs::is_directory(cfg.data_dir)) throw Error("dataset directory not found: " + cfg.data_dir);
    return data::load_folder(cfg.data_dir, {cfg.image_size, cfg.net.classes, cfg.folds});
  }
  data::SynthOptions opts;
  opts.folds = cfg.folds;
  return data::generate_synthetic_dataset(cfg.synth_n, cfg.image_size, cfg.net.classes, cfg.data_seed,
                                          opts);
}

int run(int argc, char** argv) {
  CLI::App app{"Scribble-supervised segmentation with mixed contrastive training"};
  app.require_subcommand(1);

  Common common;
  int n = 0, size = 0, classes = 0, folds = 0, cv = 0, export_n = 0;
  std::optional<int> iters;
  std::string data_dir, ckpt, param;
  std::vector<double> values;

  auto* gen = app.add_subcommand("gen-data", "write a synthetic dataset folder");
  add_common(gen, common, "dataset folder");
  gen->add_option("--n", n, "number of samples");
  gen->add_option("--size", size, "image side length");
  gen->add_option("--classes", classes, "classes including background (2-4)");
  gen->add_option("--folds", folds, "cross-validation folds");

  auto* train = app.add_subcommand("train", "train one configuration");
  add_common(train, common, "runs root");
  train->add_option("--iters", iters, "training iterations");
  train->add_option("--data", data_dir, "dataset folder (default: synthetic)");

  auto* ev = app.add_subcommand("eval", "score a checkpoint or cross-validate");
  add_common(ev, common, "runs root");
  ev->add_option("--ckpt", ckpt, "checkpoint file");
  ev->add_option("--data", data_dir, "dataset folder (default: synthetic)");
  ev->add_option("--cv", cv, "train and score k-fold cross-validation instead");
  ev->add_option("--export", export_n, "write overlay PNGs for the first N samples");

  auto* abl = app.add_subcommand("ablate", "train the seven objective configurations");
  add_common(abl, common, "runs root");
  abl->add_option("--iters", iters, "training iterations per configuration");

  auto* sw = app.add_subcommand("sweep", "sensitivity to lambda_t or lambda_ctr");
  add_common(sw, common, "runs root");
  sw->add_option("--param", param, "lambda_t or lambda_ctr")->required();
  sw->add_option("--values", values, "values (default grid for the parameter)")->delimiter(',');
  sw->add_option("--iters", iters, "training iterations per value");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    std::cerr << "error: " << one_line(e.what()) << "\n";
    return 2;
  }

  try {
    if (*gen) return cmd_gen_data(common, n, size, classes, folds);
    if (*train) return cmd_train(common, iters, data_dir);
    if (*ev) return cmd_eval(common, ckpt, data_dir, cv, export_n);
    if (*abl) return cmd_ablate(common, iters);
    if (*sw) return cmd_sweep(common, param, values, iters);
  } catch (const std::exception& e) {
    std::cerr << "error: " << one_line(e.what()) << "\n";
    return 1;
  }
  return 1;
}

}  // namespace pclmix::cli
