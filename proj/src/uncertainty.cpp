#include "pclmix/uncertainty.hpp"

#include <algorithm>

namespace pclmix::uncertainty {

torch::Tensor blend(const torch::Tensor& p_c, const torch::Tensor& p_t, double lambda_t) {
  require(lambda_t >= 0.0 && lambda_t <= 1.0, "lambda_t must lie in [0, 1]");
  require(p_c.sizes() == p_t.sizes(),
          "blend: shape mismatch " + shape_str(p_c) + " vs " + shape_str(p_t));
  if (lambda_t == 0.0) return p_c;
  if (lambda_t == 1.0) return p_t;
  return (1.0 - lambda_t) * p_c + lambda_t * p_t;
}

torch::Tensor blend(const model::DualPrediction& pred, double lambda_t) {
  return blend(pred.p_c, pred.p_t, lambda_t);
}

torch::Tensor entropy(const torch::Tensor& q, double eps) {
  require(eps > 0.0, "entropy eps must be positive");
  require(q.dim() >= 2, "entropy expects a class dimension at dim 1");
  return -(q * torch::log(q + eps)).sum(1);
}

torch::Tensor confirm(const torch::Tensor& q, const torch::Tensor& u, const torch::Tensor& scribble,
                      double threshold) {
  require(threshold > 0.0, "uncertainty threshold must be positive");
  require(q.dim() == 4 && u.dim() == 3 && scribble.dim() == 3, "confirm expects batched maps");
  require(u.sizes() == scribble.sizes() && q.size(0) == u.size(0) && q.size(2) == u.size(1) &&
              q.size(3) == u.size(2),
          "confirm: shape mismatch");
  torch::NoGradGuard no_grad;
  auto guess = q.argmax(1);
  auto uncertain = torch::full_like(guess, kUncertain);
  auto pl = torch::where(u.ge(threshold), uncertain, guess);
  auto scribbled = scribble.ne(kIgnore);
  return torch::where(scribbled, scribble.to(torch::kInt64), pl);
}

std::vector<std::uint8_t> heatmap(const torch::Tensor& u_item, int classes) {
  require(u_item.dim() == 2, "heatmap expects [H, W]");
  auto scaled = (u_item.detach().to(torch::kFloat64) / std::log(classes)).clamp(0.0, 1.0) * 255.0;
  auto bytes = scaled.round().to(torch::kUInt8).contiguous();
  const auto* p = bytes.data_ptr<std::uint8_t>();
  return {p, p + bytes.numel()};
}

}  // namespace pclmix::uncertainty
