#pragma once

#include "pclmix/model.hpp"
#include "pclmix/types.hpp"

namespace pclmix::losses {

inline constexpr double kLogEps = 1e-12;
inline constexpr double kNormFloor = 1e-12;

struct LossWeights {
  double lambda_ctr = 0.15;
  double lambda_con = 1.0;
  double lambda_mix = 1.0;
  double lambda_t = 0.4;

  void validate() const;
};

/// Which regularizers enter the objective. Disabled terms contribute 0.
struct TermSwitches {
  bool ctr = true;
  bool het = true;
  bool mix = true;
};

enum class Reduction { kMean, kSum };

/// Partial cross-entropy of the blended prediction on scribbled pixels:
/// -sum_{j in J} log((1 - lambda_t) m_c[j, y_j] + lambda_t m_t[j, y_j] + eps).
/// Returns 0 when no pixel is scribbled.
torch::Tensor pce(const torch::Tensor& m_c, const torch::Tensor& m_t, const torch::Tensor& y,
                  double lambda_t, Reduction reduction = Reduction::kMean);

/// Unmixed plus both mixed partial cross-entropies.
torch::Tensor sup_loss(const model::DualPrediction& pred, const model::DualPrediction& pred12,
                       const model::DualPrediction& pred21, const torch::Tensor& y,
                       const torch::Tensor& y12, const torch::Tensor& y21, double lambda_t,
                       Reduction reduction = Reduction::kMean);

/// Mean squared error between the two decoders, summed over the three passes.
torch::Tensor het_consistency(const model::DualPrediction& pred,
                              const model::DualPrediction& pred12,
                              const model::DualPrediction& pred21);

/// Negative cosine similarity over the class dim, averaged over pixels.
torch::Tensor negative_cosine(const torch::Tensor& a, const torch::Tensor& b);

/// Agreement between mixed-then-predicted blends and the detached
/// predicted-then-mixed targets.
torch::Tensor mix_consistency(const torch::Tensor& p12_target, const torch::Tensor& p21_target,
                              const model::DualPrediction& pred12,
                              const model::DualPrediction& pred21, double lambda_t);

struct LossParts {
  torch::Tensor sup;
  torch::Tensor ctr;
  torch::Tensor het;
  torch::Tensor mix;
};

struct LossReport {
  double sup = 0, ctr = 0, het = 0, mix = 0, con = 0, total = 0;

  bool finite() const;
  std::string describe() const;
};

struct Objective {
  torch::Tensor total;
  LossReport report;
};

/// total = sup + lambda_ctr ctr + lambda_con (het + lambda_mix mix).
/// Undefined parts count as 0.
Objective total_loss(const LossParts& parts, const LossWeights& w, const TermSwitches& on = {});

}  // namespace pclmix::losses
