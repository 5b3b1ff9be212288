#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>

#include <torch/torch.h>

// Tensor conventions used across the library:
//   images       float32  [B, H, W] (batched) or [H, W], values in [0, 1]
//   label maps   int64    [B, H, W] or [H, W]
//   probabilities         [B, K, H, W], softmax over dim 1
//   embeddings            [B, D, h, w], unit L2 norm over dim 1
namespace pclmix {

/// Unlabeled pixel in a scribble map (in memory). Files store 255 instead.
inline constexpr std::int64_t kIgnore = -100;
/// Pixel whose pseudo label was rejected by the entropy test.
inline constexpr std::int64_t kUncertain = -1;
/// Scribble sentinel inside 8-bit label images.
inline constexpr std::uint8_t kIgnoreFileValue = 255;

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

inline void require(bool cond, const std::string& msg) {
  if (!cond) throw Error(msg);
}

std::string shape_str(const torch::Tensor& t);

}  // namespace pclmix
