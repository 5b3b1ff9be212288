#pragma once

#include <torch/torch.h>

#include <algorithm>
#include <cmath>
#include <functional>
#include <vector>

namespace gradcheck {

struct Result {
  double worst_rel = 0;  // largest relative error over entries that are not ~0
  double worst_abs = 0;
  bool ok = true;
};

// Central differences of a scalar function of double tensors against autograd.
// An entry passes when its relative error is below tol or both derivatives
// are below abs_floor in magnitude.
inline Result check(const std::function<torch::Tensor(const std::vector<torch::Tensor>&)>& fn,
                    std::vector<torch::Tensor> inputs, double step = 1e-4, double tol = 1e-3,
                    double abs_floor = 1e-7) {
  for (auto& x : inputs) x = x.detach().clone().to(torch::kFloat64).requires_grad_(true);
  auto out = fn(inputs);
  auto grads = torch::autograd::grad({out}, inputs, {}, false, false, /*allow_unused=*/true);

  Result r;
  torch::NoGradGuard no_grad;
  for (size_t i = 0; i < inputs.size(); ++i) {
    auto analytic = grads[i].defined() ? grads[i].contiguous() : torch::zeros_like(inputs[i]);
    auto flat = inputs[i].view({-1});
    const auto* ap = analytic.data_ptr<double>();
    for (int64_t j = 0; j < flat.numel(); ++j) {
      const double orig = flat[j].item<double>();
      flat[j] = orig + step;
      const double up = fn(inputs).item<double>();
      flat[j] = orig - step;
      const double down = fn(inputs).item<double>();
      flat[j] = orig;
      const double numeric = (up - down) / (2 * step);
      const double diff = std::abs(numeric - ap[j]);
      const double scale = std::max(std::abs(numeric), std::abs(ap[j]));
      r.worst_abs = std::max(r.worst_abs, diff);
      if (scale < abs_floor && diff < abs_floor) continue;
      const double rel = diff / scale;
      r.worst_rel = std::max(r.worst_rel, rel);
      if (rel >= tol) r.ok = false;
    }
  }
  return r;
}

}  // namespace gradcheck
