#pragma once

#include <cstdint>
#include <random>
#include <utility>
#include <vector>

#include "pclmix/types.hpp"

namespace pclmix::mixaug {

struct Box {
  int y0 = 0;
  int x0 = 0;
  int height = 0;
  int width = 0;

  bool operator==(const Box&) const = default;
};

/// Two batch orders plus one crop box per output item. The same box is
/// used for the 1->2 and 2->1 directions.
struct MixPlan {
  std::vector<int64_t> perm1;
  std::vector<int64_t> perm2;
  std::vector<Box> boxes;
  int height = 0;
  int width = 0;

  int64_t batch() const { return static_cast<int64_t>(perm1.size()); }
  bool operator==(const MixPlan&) const = default;
};

/// Side of the square CutMix box for an area ratio, clamped to the image.
int box_side(int height, int width, double ratio);

/// per_item=false samples a single box shared by the whole batch.
MixPlan make_plan(int batch, int height, int width, double ratio, std::mt19937_64& rng,
                  bool per_item = true);
MixPlan make_plan(int batch, int height, int width, double ratio, std::uint64_t seed,
                  bool per_item = true);

/// Box splice over the last two dims of any [B, ..., H, W] tensor:
/// out12[i] = x[perm1[i]] with box i taken from x[perm2[i]], out21 the reverse.
std::pair<torch::Tensor, torch::Tensor> splice(const torch::Tensor& x, const MixPlan& plan);

std::pair<torch::Tensor, torch::Tensor> mix_images(const torch::Tensor& images, const MixPlan& plan);
std::pair<torch::Tensor, torch::Tensor> mix_labels(const torch::Tensor& labels, const MixPlan& plan);
/// Mixes whole class vectors of a [B, K, H, W] map; results are detached.
std::pair<torch::Tensor, torch::Tensor> mix_predictions(const torch::Tensor& probs,
                                                        const MixPlan& plan);

/// 1 where out12 takes its pixel from the second order, [B, H, W] bool.
torch::Tensor provenance_mask(const MixPlan& plan);

}  // namespace pclmix::mixaug
