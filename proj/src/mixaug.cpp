#include "pclmix/mixaug.hpp"

#include <algorithm>
#include <cmath>
#include <fmt/format.h>

namespace pclmix::mixaug {
namespace {

std::vector<int64_t> random_permutation(int n, std::mt19937_64& rng) {
  std::vector<int64_t> p(n);
  for (int i = 0; i < n; ++i) p[i] = i;
  for (int i = n - 1; i > 0; --i) {
    const int j = std::uniform_int_distribution<int>(0, i)(rng);
    std::swap(p[i], p[j]);
  }
  return p;
}

Box random_box(int height, int width, int side, std::mt19937_64& rng) {
  Box b;
  b.height = std::min(side, height);
  b.width = std::min(side, width);
  b.y0 = std::uniform_int_distribution<int>(0, height - b.height)(rng);
  b.x0 = std::uniform_int_distribution<int>(0, width - b.width)(rng);
  return b;
}

void check_shape(const torch::Tensor& x, const MixPlan& plan) {
  require(x.dim() >= 3 && x.size(0) == plan.batch() && x.size(-2) == plan.height &&
              x.size(-1) == plan.width,
          fmt::format("tensor {} does not match mix plan (B={}, H={}, W={})", shape_str(x),
                      plan.batch(), plan.height, plan.width));
}

}  // namespace

int box_side(int height, int width, double ratio) {
  const int side = static_cast<int>(std::lround(std::sqrt(ratio * height * width)));
  return std::clamp(side, 1, std::max(height, width));
}

MixPlan make_plan(int batch, int height, int width, double ratio, std::mt19937_64& rng,
                  bool per_item) {
  require(batch >= 2, "mix plan needs a batch of at least 2");
  require(ratio > 0.0 && ratio < 1.0, "mix ratio must be in (0, 1)");
  require(height >= 1 && width >= 1, "image size must be positive");
  MixPlan plan;
  plan.height = height;
  plan.width = width;
  plan.perm1 = random_permutation(batch, rng);
  plan.perm2 = random_permutation(batch, rng);
  const int side = box_side(height, width, ratio);
  if (per_item) {
    for (int i = 0; i < batch; ++i) plan.boxes.push_back(random_box(height, width, side, rng));
  } else {
    plan.boxes.assign(batch, random_box(height, width, side, rng));
  }
  return plan;
}

MixPlan make_plan(int batch, int height, int width, double ratio, std::uint64_t seed,
                  bool per_item) {
  std::mt19937_64 rng(seed);
  return make_plan(batch, height, width, ratio, rng, per_item);
}

std::pair<torch::Tensor, torch::Tensor> splice(const torch::Tensor& x, const MixPlan& plan) {
  check_shape(x, plan);
  auto idx1 = torch::tensor(plan.perm1, torch::kInt64);
  auto idx2 = torch::tensor(plan.perm2, torch::kInt64);
  auto x1 = x.index_select(0, idx1);
  auto x2 = x.index_select(0, idx2);
  auto out12 = x1.clone();
  auto out21 = x2.clone();
  const int64_t hdim = x.dim() - 2, wdim = x.dim() - 1;
  for (int64_t i = 0; i < plan.batch(); ++i) {
    const auto& b = plan.boxes[i];
    auto window = [&](const torch::Tensor& t) {
      return t[i].narrow(hdim - 1, b.y0, b.height).narrow(wdim - 1, b.x0, b.width);
    };
    window(out12).copy_(window(x2));
    window(out21).copy_(window(x1));
  }
  return {out12, out21};
}

std::pair<torch::Tensor, torch::Tensor> mix_images(const torch::Tensor& images,
                                                   const MixPlan& plan) {
  return splice(images, plan);
}

std::pair<torch::Tensor, torch::Tensor> mix_labels(const torch::Tensor& labels,
                                                   const MixPlan& plan) {
  return splice(labels, plan);
}

std::pair<torch::Tensor, torch::Tensor> mix_predictions(const torch::Tensor& probs,
                                                        const MixPlan& plan) {
  require(probs.dim() == 4, "mix_predictions expects [B, K, H, W], got " + shape_str(probs));
  return splice(probs.detach(), plan);
}

torch::Tensor provenance_mask(const MixPlan& plan) {
  auto m = torch::zeros({plan.batch(), plan.height, plan.width}, torch::kBool);
  for (int64_t i = 0; i < plan.batch(); ++i) {
    const auto& b = plan.boxes[i];
    m[i].narrow(0, b.y0, b.height).narrow(1, b.x0, b.width).fill_(true);
  }
  return m;
}

}  // namespace pclmix::mixaug
