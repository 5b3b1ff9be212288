#pragma once

#include <cmath>

#include "pclmix/model.hpp"
#include "pclmix/types.hpp"

namespace pclmix::uncertainty {

inline constexpr double kDefaultEps = 1e-8;
/// Threshold default, as a fraction of the maximum entropy ln(K).
inline constexpr double kDefaultThresholdScale = 0.3;

inline double default_threshold(int classes) { return kDefaultThresholdScale * std::log(classes); }

/// q = (1 - lambda_t) * p_c + lambda_t * p_t.
torch::Tensor blend(const torch::Tensor& p_c, const torch::Tensor& p_t, double lambda_t);
torch::Tensor blend(const model::DualPrediction& pred, double lambda_t);

/// Per-pixel predictive entropy -sum_k q_k log(q_k + eps): [B, K, H, W] -> [B, H, W].
torch::Tensor entropy(const torch::Tensor& q, double eps = kDefaultEps);

/// Confirmed pseudo labels: scribble class on scribbled pixels, kUncertain
/// where u >= threshold, argmax q (lowest index on ties) otherwise.
torch::Tensor confirm(const torch::Tensor& q, const torch::Tensor& u, const torch::Tensor& scribble,
                      double threshold);

/// 8-bit heatmap of u / ln(K) for one item, row-major.
std::vector<std::uint8_t> heatmap(const torch::Tensor& u_item, int classes);

}  // namespace pclmix::uncertainty
