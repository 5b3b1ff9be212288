#pragma once

#include <cstdint>
#include <deque>
#include <random>
#include <vector>

#include "pclmix/types.hpp"

namespace pclmix::contrastive {

struct ContrastiveConfig {
  int queue_capacity = 256;  ///< per class
  int push_per_iter = 16;    ///< per class
  int anchors = 64;
  double tau = 0.1;
  bool include_background = true;
};

struct Prototype {
  torch::Tensor v;  ///< [D], unit norm, detached
  int64_t cls = 0;
  std::uint64_t age = 0;
};

/// Per-class FIFO of detached unit-norm prototype vectors.
class MemoryQueue {
 public:
  MemoryQueue(int classes, int capacity);

  /// Appends a prototype (re-normalized, detached) and evicts the oldest
  /// entry of its class beyond capacity.
  void push(const torch::Tensor& v, int64_t cls);

  const std::deque<Prototype>& entries(int64_t cls) const { return lists_.at(cls); }
  int classes() const { return static_cast<int>(lists_.size()); }
  int capacity() const { return capacity_; }
  size_t size() const;
  bool empty() const { return size() == 0; }

  /// All stored vectors stacked [M, D] with their classes; class-major,
  /// oldest first within a class. Vectors are undefined when empty.
  std::pair<torch::Tensor, std::vector<int64_t>> snapshot() const;

 private:
  int capacity_;
  std::uint64_t next_age_ = 0;
  std::vector<std::deque<Prototype>> lists_;
};

struct Anchors {
  torch::Tensor vectors;  ///< [N, D], still attached to the embedding graph
  std::vector<int64_t> cls;

  size_t size() const { return cls.size(); }
};

/// Nearest sampling at cell centers (offset stride/2): [B, H, W] -> [B, H/s, W/s].
torch::Tensor downsample_labels(const torch::Tensor& pl, int stride);

/// Uniformly samples up to n confirmed cells without replacement.
Anchors sample_anchors(const torch::Tensor& pl_lowres, const torch::Tensor& z, int n,
                       std::mt19937_64& rng, bool include_background = true);
Anchors sample_anchors(const torch::Tensor& pl_lowres, const torch::Tensor& z, int n,
                       std::uint64_t seed, bool include_background = true);

/// InfoNCE of one anchor; each positive's denominator holds that positive and
/// every negative. Requires at least one positive.
torch::Tensor info_nce(const torch::Tensor& anchor, const torch::Tensor& positives,
                       const torch::Tensor& negatives, double tau);

/// Mean InfoNCE over anchors that have at least one same-class entry in the
/// queue. Queue contents never receive gradient. Empty queue gives 0.
torch::Tensor contrastive_loss(const Anchors& anchors, const MemoryQueue& queue, double tau);

/// Pushes up to push_per_iter confirmed cells per class from z.
void enqueue(const torch::Tensor& z, const torch::Tensor& pl_lowres, MemoryQueue& queue,
             int push_per_iter, std::mt19937_64& rng, bool include_background = true);

}  // namespace pclmix::contrastive
