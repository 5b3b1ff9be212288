#include "pclmix/losses.hpp"

#include <cmath>
#include <fmt/format.h>

#include "pclmix/uncertainty.hpp"

namespace pclmix::losses {
namespace {

void check_pair(const torch::Tensor& a, const torch::Tensor& b, const char* what) {
  require(a.dim() == 4 && a.sizes() == b.sizes(),
          fmt::format("{}: shape mismatch {} vs {}", what, shape_str(a), shape_str(b)));
}

double value_of(const torch::Tensor& t) { return t.defined() ? t.item<double>() : 0.0; }

}  // namespace

void LossWeights::validate() const {
  require(lambda_ctr >= 0 && lambda_con >= 0 && lambda_mix >= 0, "loss weights must be >= 0");
  require(lambda_t >= 0 && lambda_t <= 1, "lambda_t must lie in [0, 1]");
}

torch::Tensor pce(const torch::Tensor& m_c, const torch::Tensor& m_t, const torch::Tensor& y,
                  double lambda_t, Reduction reduction) {
  check_pair(m_c, m_t, "pce");
  require(y.dim() == 3 && y.size(0) == m_c.size(0) && y.size(1) == m_c.size(2) &&
              y.size(2) == m_c.size(3),
          "pce: labels " + shape_str(y) + " do not match predictions " + shape_str(m_c));
  auto labeled = y.ne(kIgnore);
  const int64_t count = labeled.sum().item<int64_t>();
  if (count == 0) return torch::zeros({}, m_c.options().requires_grad(false));
  require(y.masked_select(labeled).lt(m_c.size(1)).all().item<bool>() &&
              y.masked_select(labeled).ge(0).all().item<bool>(),
          "pce: scribble class out of range");
  auto blended = uncertainty::blend(m_c, m_t, lambda_t);
  auto index = y.clamp_min(0).unsqueeze(1);
  auto picked = blended.gather(1, index).squeeze(1);
  auto nll = -torch::log(picked.masked_select(labeled) + kLogEps);
  return reduction == Reduction::kMean ? nll.mean() : nll.sum();
}

torch::Tensor sup_loss(const model::DualPrediction& pred, const model::DualPrediction& pred12,
                       const model::DualPrediction& pred21, const torch::Tensor& y,
                       const torch::Tensor& y12, const torch::Tensor& y21, double lambda_t,
                       Reduction reduction) {
  return pce(pred.p_c, pred.p_t, y, lambda_t, reduction) +
         pce(pred12.p_c, pred12.p_t, y12, lambda_t, reduction) +
         pce(pred21.p_c, pred21.p_t, y21, lambda_t, reduction);
}

torch::Tensor het_consistency(const model::DualPrediction& pred,
                              const model::DualPrediction& pred12,
                              const model::DualPrediction& pred21) {
  auto mse = [](const model::DualPrediction& p) {
    check_pair(p.p_c, p.p_t, "het_consistency");
    return (p.p_c - p.p_t).pow(2).mean();
  };
  return mse(pred) + mse(pred12) + mse(pred21);
}

torch::Tensor negative_cosine(const torch::Tensor& a, const torch::Tensor& b) {
  check_pair(a, b, "negative_cosine");
  auto dot = (a * b).sum(1);
  auto na = a.pow(2).sum(1).sqrt().clamp_min(kNormFloor);
  auto nb = b.pow(2).sum(1).sqrt().clamp_min(kNormFloor);
  return -(dot / (na * nb)).mean();
}

torch::Tensor mix_consistency(const torch::Tensor& p12_target, const torch::Tensor& p21_target,
                              const model::DualPrediction& pred12,
                              const model::DualPrediction& pred21, double lambda_t) {
  auto q12 = uncertainty::blend(pred12, lambda_t);
  auto q21 = uncertainty::blend(pred21, lambda_t);
  return negative_cosine(p12_target.detach(), q12) + negative_cosine(p21_target.detach(), q21);
}

bool LossReport::finite() const {
  for (double v : {sup, ctr, het, mix, con, total})
    if (!std::isfinite(v)) return false;
  return true;
}

std::string LossReport::describe() const {
  return fmt::format("sup={} ctr={} het={} mix={} con={} total={}", sup, ctr, het, mix, con, total);
}

Objective total_loss(const LossParts& parts, const LossWeights& w, const TermSwitches& on) {
  w.validate();
  require(parts.sup.defined(), "supervised loss is required");
  Objective out;
  const bool use_ctr = on.ctr && parts.ctr.defined();
  const bool use_het = on.het && parts.het.defined();
  const bool use_mix = on.mix && parts.mix.defined();

  torch::Tensor con;
  if (use_het) con = parts.het;
  if (use_mix) con = con.defined() ? con + w.lambda_mix * parts.mix : w.lambda_mix * parts.mix;

  out.total = parts.sup;
  if (use_ctr) out.total = out.total + w.lambda_ctr * parts.ctr;
  if (con.defined()) out.total = out.total + w.lambda_con * con;

  auto& r = out.report;
  r.sup = value_of(parts.sup);
  r.ctr = use_ctr ? value_of(parts.ctr) : 0.0;
  r.het = use_het ? value_of(parts.het) : 0.0;
  r.mix = use_mix ? value_of(parts.mix) : 0.0;
  r.con = r.het + w.lambda_mix * r.mix;
  r.total = r.sup + w.lambda_ctr * r.ctr + w.lambda_con * r.con;
  return out;
}

}  // namespace pclmix::losses
