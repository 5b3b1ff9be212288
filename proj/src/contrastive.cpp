#include "pclmix/contrastive.hpp"

#include <fmt/format.h>
#include <limits>

namespace pclmix::contrastive {
namespace F = torch::nn::functional;

namespace {

constexpr double kNormFloor = 1e-12;

torch::Tensor unit_rows(const torch::Tensor& x) {
  return F::normalize(x, F::NormalizeFuncOptions().dim(-1).eps(kNormFloor));
}

// Partial Fisher-Yates: first k entries become a uniform sample.
template <typename T>
void partial_shuffle(std::vector<T>& items, size_t k, std::mt19937_64& rng) {
  k = std::min(k, items.size());
  for (size_t i = 0; i < k; ++i) {
    const size_t j = std::uniform_int_distribution<size_t>(i, items.size() - 1)(rng);
    std::swap(items[i], items[j]);
  }
  items.resize(k);
}

// Per-row InfoNCE over a similarity matrix. Returns the per-anchor losses and
// the number of positives of each anchor.
std::pair<torch::Tensor, torch::Tensor> infonce_rows(const torch::Tensor& sim,
                                                     const torch::Tensor& pos_mask) {
  const double neg_inf = -std::numeric_limits<double>::infinity();
  auto neg_mask = pos_mask.logical_not();
  auto has_neg = neg_mask.any(1, /*keepdim=*/true);
  // Rows without negatives get a finite dummy so no NaN reaches the backward pass.
  auto neg_logits = sim.masked_fill(pos_mask, neg_inf).masked_fill(has_neg.logical_not(), 0.0);
  auto neg_lse = torch::logsumexp(neg_logits, 1, /*keepdim=*/true);
  auto pair = torch::logaddexp(sim, neg_lse) - sim;
  pair = torch::where(has_neg, pair, torch::zeros_like(pair));
  auto pos_f = pos_mask.to(sim.scalar_type());
  auto n_pos = pos_f.sum(1);
  auto per_anchor = (pair * pos_f).sum(1) / n_pos.clamp_min(1.0);
  return {per_anchor, n_pos};
}

}  // namespace

MemoryQueue::MemoryQueue(int classes, int capacity) : capacity_(capacity), lists_(classes) {
  require(classes >= 1, "queue needs at least one class");
  require(capacity >= 1, "queue capacity must be positive");
}

void MemoryQueue::push(const torch::Tensor& v, int64_t cls) {
  require(cls >= 0 && cls < classes(), fmt::format("queue class {} out of range", cls));
  require(v.dim() == 1, "prototype must be a vector");
  auto& list = lists_[cls];
  list.push_back({unit_rows(v.detach()).clone(), cls, next_age_++});
  while (list.size() > static_cast<size_t>(capacity_)) list.pop_front();
}

size_t MemoryQueue::size() const {
  size_t n = 0;
  for (const auto& l : lists_) n += l.size();
  return n;
}

std::pair<torch::Tensor, std::vector<int64_t>> MemoryQueue::snapshot() const {
  std::vector<torch::Tensor> vs;
  std::vector<int64_t> cls;
  for (const auto& l : lists_) {
    for (const auto& p : l) {
      vs.push_back(p.v);
      cls.push_back(p.cls);
    }
  }
  if (vs.empty()) return {torch::Tensor(), {}};
  return {torch::stack(vs), cls};
}

torch::Tensor downsample_labels(const torch::Tensor& pl, int stride) {
  require(stride >= 1, "stride must be positive");
  require(pl.dim() == 3, "downsample_labels expects [B, H, W]");
  require(pl.size(1) % stride == 0 && pl.size(2) % stride == 0,
          fmt::format("label map {} not divisible by stride {}", shape_str(pl), stride));
  const int64_t off = stride / 2;
  return pl.slice(1, off, pl.size(1), stride).slice(2, off, pl.size(2), stride).contiguous();
}

Anchors sample_anchors(const torch::Tensor& pl_lowres, const torch::Tensor& z, int n,
                       std::mt19937_64& rng, bool include_background) {
  require(n >= 1, "anchor count must be positive");
  require(z.dim() == 4 && pl_lowres.dim() == 3 && z.size(0) == pl_lowres.size(0) &&
              z.size(2) == pl_lowres.size(1) && z.size(3) == pl_lowres.size(2),
          "sample_anchors: embedding " + shape_str(z) + " vs labels " + shape_str(pl_lowres));
  auto labels = pl_lowres.contiguous();
  const auto* p = labels.data_ptr<int64_t>();
  std::vector<int64_t> cells;
  for (int64_t i = 0; i < labels.numel(); ++i) {
    if (p[i] == kUncertain || p[i] < 0) continue;
    if (!include_background && p[i] == 0) continue;
    cells.push_back(i);
  }
  partial_shuffle(cells, static_cast<size_t>(n), rng);
  Anchors out;
  if (cells.empty()) return out;
  const int64_t d = z.size(1);
  auto flat = z.permute({0, 2, 3, 1}).reshape({-1, d});
  out.vectors = flat.index_select(0, torch::tensor(cells, torch::kInt64));
  for (int64_t c : cells) out.cls.push_back(p[c]);
  return out;
}

Anchors sample_anchors(const torch::Tensor& pl_lowres, const torch::Tensor& z, int n,
                       std::uint64_t seed, bool include_background) {
  std::mt19937_64 rng(seed);
  return sample_anchors(pl_lowres, z, n, rng, include_background);
}

torch::Tensor info_nce(const torch::Tensor& anchor, const torch::Tensor& positives,
                       const torch::Tensor& negatives, double tau) {
  require(tau > 0.0, "temperature must be positive");
  require(anchor.dim() == 1 && positives.dim() == 2 && positives.size(0) >= 1,
          "info_nce needs a [D] anchor and at least one [D] positive");
  require(negatives.dim() == 2 || negatives.numel() == 0, "negatives must be [M_n, D]");
  const int64_t mp = positives.size(0);
  auto bank = negatives.numel() == 0 ? positives : torch::cat({positives, negatives}, 0);
  auto sim = torch::matmul(unit_rows(anchor).unsqueeze(0), unit_rows(bank).t()) / tau;
  auto pos_mask = torch::zeros({1, bank.size(0)}, torch::kBool);
  pos_mask.narrow(1, 0, mp).fill_(true);
  return infonce_rows(sim, pos_mask).first.squeeze(0);
}

torch::Tensor contrastive_loss(const Anchors& anchors, const MemoryQueue& queue, double tau) {
  require(tau > 0.0, "temperature must be positive");
  if (anchors.size() == 0 || queue.empty()) {
    auto opts = anchors.vectors.defined() ? anchors.vectors.options() : torch::TensorOptions();
    return torch::zeros({}, opts.requires_grad(false));
  }
  auto [bank, bank_cls] = queue.snapshot();
  bank = bank.to(anchors.vectors.scalar_type());
  auto sim = torch::matmul(unit_rows(anchors.vectors), unit_rows(bank).t()) / tau;
  auto a_cls = torch::tensor(anchors.cls, torch::kInt64).unsqueeze(1);
  auto q_cls = torch::tensor(bank_cls, torch::kInt64).unsqueeze(0);
  auto pos_mask = a_cls.eq(q_cls);
  auto [per_anchor, n_pos] = infonce_rows(sim, pos_mask);
  auto valid = n_pos.gt(0);
  const int64_t n_valid = valid.sum().item<int64_t>();
  if (n_valid == 0) return torch::zeros({}, sim.options().requires_grad(false));
  return (per_anchor * valid.to(per_anchor.scalar_type())).sum() / static_cast<double>(n_valid);
}

void enqueue(const torch::Tensor& z, const torch::Tensor& pl_lowres, MemoryQueue& queue,
             int push_per_iter, std::mt19937_64& rng, bool include_background) {
  require(z.dim() == 4 && pl_lowres.dim() == 3 && z.size(0) == pl_lowres.size(0) &&
              z.size(2) == pl_lowres.size(1) && z.size(3) == pl_lowres.size(2),
          "enqueue: embedding " + shape_str(z) + " vs labels " + shape_str(pl_lowres));
  torch::NoGradGuard no_grad;
  auto labels = pl_lowres.contiguous();
  const auto* p = labels.data_ptr<int64_t>();
  const int64_t d = z.size(1);
  auto flat = z.detach().permute({0, 2, 3, 1}).reshape({-1, d});
  std::vector<std::vector<int64_t>> by_class(queue.classes());
  for (int64_t i = 0; i < labels.numel(); ++i) {
    if (p[i] < 0 || p[i] >= queue.classes()) continue;
    if (!include_background && p[i] == 0) continue;
    by_class[p[i]].push_back(i);
  }
  for (int64_t c = 0; c < queue.classes(); ++c) {
    auto& cells = by_class[c];
    partial_shuffle(cells, static_cast<size_t>(push_per_iter), rng);
    for (int64_t cell : cells) queue.push(flat[cell], c);
  }
}

}  // namespace pclmix::contrastive
