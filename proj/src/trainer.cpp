#include "pclmix/trainer.hpp"

#include <cmath>
#include <fmt/format.h>
#include <fstream>

#include "pclmix/checkpoint.hpp"
#include "pclmix/mixaug.hpp"
#include "pclmix/plot.hpp"
#include "pclmix/uncertainty.hpp"

namespace pclmix::trainer {
namespace {

std::mt19937_64 stream(std::uint64_t seed, std::uint32_t id) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32), id};
  return std::mt19937_64(seq);
}

}  // namespace

void TrainConfig::validate() const {
  require(lr0 > 0 && lr_end >= 0 && lr_end <= lr0, "need 0 <= lr_end <= lr0 and lr0 > 0");
  require(poly_power > 0, "poly_power must be positive");
  require(momentum >= 0 && momentum < 1, "momentum must lie in [0, 1)");
  require(weight_decay >= 0, "weight_decay must be non-negative");
  require(batch_size >= 2, "batch_size must be at least 2");
  require(total_iters >= 1, "total_iters must be at least 1");
  require(mix_ratio > 0 && mix_ratio < 1, "mix_ratio must lie in (0, 1)");
  require(ckpt_every >= 0, "ckpt_every must be non-negative");
  require(threshold_scale > 0, "threshold_scale must be positive");
  require(entropy_eps > 0, "entropy_eps must be positive");
  require(ctr.queue_capacity >= 1 && ctr.push_per_iter >= 0 && ctr.anchors >= 1 && ctr.tau > 0,
          "invalid contrastive settings");
  weights.validate();
}

double TrainConfig::threshold(int classes) const { return threshold_scale * std::log(classes); }

double poly_lr(int iteration, const TrainConfig& cfg) {
  const double progress = std::clamp(static_cast<double>(iteration) / cfg.total_iters, 0.0, 1.0);
  return cfg.lr_end + (cfg.lr0 - cfg.lr_end) * std::pow(1.0 - progress, cfg.poly_power);
}

Trainer::Trainer(model::SegNet net, TrainConfig cfg)
    : net_(std::move(net)),
      cfg_(cfg),
      optimizer_(net_->parameters(), torch::optim::SGDOptions(cfg.lr0)
                                         .momentum(cfg.momentum)
                                         .weight_decay(cfg.weight_decay)),
      queue_(net_->config().classes, cfg.ctr.queue_capacity),
      plan_rng_(stream(cfg.seed, 1)),
      anchor_rng_(stream(cfg.seed, 2)),
      enqueue_rng_(stream(cfg.seed, 3)) {
  cfg_.validate();
}

losses::LossReport Trainer::step(const data::Batch& batch) {
  require(batch.size() >= 2, "training batch must hold at least 2 samples");
  net_->train();
  const auto& net_cfg = net_->config();
  const int64_t b = batch.size();
  const int h = static_cast<int>(batch.images.size(1)), w = static_cast<int>(batch.images.size(2));
  const double lambda_t = cfg_.weights.lambda_t;
  const auto& flags = cfg_.flags;

  // Mixing geometry only depends on the RNG, so the three views can share
  // one pass through the network.
  const auto plan = mixaug::make_plan(static_cast<int>(b), h, w, cfg_.mix_ratio, plan_rng_,
                                      cfg_.per_item_boxes);
  auto [x12, x21] = mixaug::mix_images(batch.images, plan);
  auto [y12, y21] = mixaug::mix_labels(batch.scribbles, plan);

  // (1) forward; (4) shares the pass
  auto out = net_->forward(torch::cat({batch.images, x12, x21}, 0));
  auto views_c = out.pred.p_c.split(b, 0);
  auto views_t = out.pred.p_t.split(b, 0);
  const model::DualPrediction pred{views_c[0], views_t[0]};
  const model::DualPrediction pred12{views_c[1], views_t[1]};
  const model::DualPrediction pred21{views_c[2], views_t[2]};
  const auto z = out.z.narrow(0, 0, b);

  torch::Tensor q, pl;
  {
    torch::NoGradGuard no_grad;
    q = uncertainty::blend(pred.p_c.detach(), pred.p_t.detach(), lambda_t);
    const auto u = uncertainty::entropy(q, cfg_.entropy_eps);
    pl = uncertainty::confirm(q, u, batch.scribbles, cfg_.threshold(net_cfg.classes));
  }

  // (2) memory queue and contrastive loss
  torch::Tensor ctr;
  if (flags.use_ctr) {
    const auto pl_low = contrastive::downsample_labels(pl, net_cfg.feature_stride);
    contrastive::enqueue(z, pl_low, queue_, cfg_.ctr.push_per_iter, enqueue_rng_,
                         cfg_.ctr.include_background);
    const auto anchors = contrastive::sample_anchors(pl_low, z, cfg_.ctr.anchors, anchor_rng_,
                                                     cfg_.ctr.include_background);
    ctr = contrastive::contrastive_loss(anchors, queue_, cfg_.ctr.tau);
  }

  // (3) predicted-then-mixed targets
  auto [p12_target, p21_target] = mixaug::mix_predictions(q, plan);

  // (4) objective on all three views
  losses::LossParts parts;
  const double sup_lambda_t = flags.use_aux_decoder_sup ? lambda_t : 0.0;
  parts.sup = losses::sup_loss(pred, pred12, pred21, batch.scribbles, y12, y21, sup_lambda_t,
                               cfg_.pce_reduction);
  parts.ctr = ctr;
  if (flags.use_het) parts.het = losses::het_consistency(pred, pred12, pred21);
  if (flags.use_mix) {
    parts.mix = losses::mix_consistency(p12_target, p21_target, pred12, pred21, lambda_t);
  }
  auto objective = losses::total_loss(parts, cfg_.weights,
                                      {flags.use_ctr, flags.use_het, flags.use_mix});
  if (!objective.report.finite() || !std::isfinite(objective.total.item<double>())) {
    throw Error(fmt::format("non-finite loss at iteration {}: {}", iter_,
                            objective.report.describe()));
  }

  const double lr = poly_lr(iter_, cfg_);
  for (auto& group : optimizer_.param_groups()) {
    static_cast<torch::optim::SGDOptions&>(group.options()).lr(lr);
  }
  optimizer_.zero_grad();
  objective.total.backward();
  optimizer_.step();
  ++iter_;
  return objective.report;
}

void write_log_csv(const std::filesystem::path& path, std::span<const LogRow> log) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw Error("cannot write " + path.string());
  out << "iter,lr,sup,ctr,het,mix,total\n";
  for (const auto& r : log) {
    out << fmt::format("{},{},{},{},{},{},{}\n", r.iter, r.lr, r.loss.sup, r.loss.ctr, r.loss.het,
                       r.loss.mix, r.loss.total);
  }
}

TrainResult train(std::span<const data::Sample> dataset, const model::NetConfig& net_cfg,
                  const TrainConfig& cfg, const std::filesystem::path& run_dir,
                  const ProgressFn& progress) {
  require(!dataset.empty(), "training dataset is empty");
  cfg.validate();
  net_cfg.validate(dataset.front().height(), dataset.front().width());
  const bool write = !run_dir.empty();
  if (write) std::filesystem::create_directories(run_dir);

  TrainResult result;
  Trainer trainer(model::make_segnet(net_cfg, cfg.seed), cfg);
  data::BatchStream batches(dataset, cfg.batch_size, cfg.seed, /*training=*/true);
  for (int i = 0; i < cfg.total_iters; ++i) {
    const double lr = trainer.current_lr();
    LogRow row{i + 1, lr, trainer.step(batches.next())};
    result.log.push_back(row);
    if (progress) progress(row);
    if (write && cfg.ckpt_every > 0 && row.iter % cfg.ckpt_every == 0) {
      const auto path = run_dir / fmt::format("ckpt_{}.bin", row.iter);
      checkpoint::save(path, trainer.net(), {{"iter", std::to_string(row.iter)}});
      result.checkpoints.push_back(path);
    }
  }
  result.net = trainer.net();
  result.net->eval();
  if (write) {
    const auto path = run_dir / "ckpt_final.bin";
    checkpoint::save(path, result.net, {{"iter", std::to_string(cfg.total_iters)}});
    result.checkpoints.push_back(path);
    write_log_csv(run_dir / "log.csv", result.log);
    plot::Series total{"total", {}, {}, plot::kPalette[0]};
    plot::Series sup{"sup", {}, {}, plot::kPalette[1]};
    for (const auto& r : result.log) {
      total.x.push_back(r.iter);
      total.y.push_back(r.loss.total);
      sup.x.push_back(r.iter);
      sup.y.push_back(r.loss.sup);
    }
    plot::write_line_chart(run_dir / "curves.png", {total, sup});
  }
  return result;
}

}  // namespace pclmix::trainer
