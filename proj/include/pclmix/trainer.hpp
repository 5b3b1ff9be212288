#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <random>
#include <span>
#include <vector>

#include "pclmix/contrastive.hpp"
#include "pclmix/data.hpp"
#include "pclmix/losses.hpp"
#include "pclmix/model.hpp"

namespace pclmix::trainer {

/// Objective switches; all off (plus aux supervision on) is ℓ_sup alone.
struct AblationFlags {
  bool use_ctr = true;
  bool use_het = true;
  bool use_mix = true;
  bool use_aux_decoder_sup = true;  ///< false zeroes lambda_t inside pce only

  bool operator==(const AblationFlags&) const = default;
};

struct TrainConfig {
  double lr0 = 0.03;
  double lr_end = 0.001;
  double poly_power = 0.9;
  double momentum = 0.9;
  double weight_decay = 5e-4;
  int batch_size = 8;
  int total_iters = 2000;
  double mix_ratio = 0.2;
  bool per_item_boxes = true;
  int ckpt_every = 0;  ///< 0 writes only the final checkpoint
  std::uint64_t seed = 0;
  AblationFlags flags;
  losses::LossWeights weights;
  losses::Reduction pce_reduction = losses::Reduction::kMean;
  contrastive::ContrastiveConfig ctr;
  double threshold_scale = 0.3;  ///< entropy threshold as a fraction of ln(K)
  double entropy_eps = 1e-8;

  void validate() const;
  double threshold(int classes) const;
};

/// lr(i) = lr_end + (lr0 - lr_end) (1 - i / total_iters)^poly_power.
double poly_lr(int iteration, const TrainConfig& cfg);

struct LogRow {
  int iter = 0;  ///< completed iterations
  double lr = 0;
  losses::LossReport loss;
};

/// Owns the optimizer, memory queue and RNG streams of one training run.
class Trainer {
 public:
  Trainer(model::SegNet net, TrainConfig cfg);

  /// One iteration: unmixed pass and pseudo labels, contrastive queue and
  /// loss, mixing, mixed passes, single backward and SGD update.
  losses::LossReport step(const data::Batch& batch);

  int iteration() const { return iter_; }
  double current_lr() const { return poly_lr(iter_, cfg_); }
  model::SegNet& net() { return net_; }
  const contrastive::MemoryQueue& queue() const { return queue_; }
  const TrainConfig& config() const { return cfg_; }

 private:
  model::SegNet net_;
  TrainConfig cfg_;
  torch::optim::SGD optimizer_;
  contrastive::MemoryQueue queue_;
  std::mt19937_64 plan_rng_;
  std::mt19937_64 anchor_rng_;
  std::mt19937_64 enqueue_rng_;
  int iter_ = 0;
};

struct TrainResult {
  model::SegNet net{nullptr};
  std::vector<LogRow> log;
  std::vector<std::filesystem::path> checkpoints;
};

using ProgressFn = std::function<void(const LogRow&)>;

/// Full run. With a non-empty run_dir writes log.csv, curves.png,
/// ckpt_{iter}.bin every ckpt_every iterations and ckpt_final.bin.
TrainResult train(std::span<const data::Sample> dataset, const model::NetConfig& net_cfg,
                  const TrainConfig& cfg, const std::filesystem::path& run_dir = {},
                  const ProgressFn& progress = {});

void write_log_csv(const std::filesystem::path& path, std::span<const LogRow> log);

}  // namespace pclmix::trainer
