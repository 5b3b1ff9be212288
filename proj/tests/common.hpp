#pragma once

#include <torch/torch.h>

// c10 and doctest both want CHECK
#undef CHECK
#undef CHECK_EQ
#undef CHECK_NE
#undef CHECK_LT
#undef CHECK_LE
#undef CHECK_GT
#undef CHECK_GE
#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <random>
#include <string>

namespace testutil {

inline std::filesystem::path temp_dir(const std::string& name) {
  auto dir = std::filesystem::temp_directory_path() / ("pclmix_test_" + name);
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir;
}

// Random probability maps [B, K, H, W] in double.
inline torch::Tensor random_probs(std::vector<int64_t> shape, std::uint64_t seed,
                                  torch::Dtype dtype = torch::kFloat64) {
  auto gen = at::detail::createCPUGenerator(seed);
  auto logits = at::randn(shape, gen, torch::TensorOptions().dtype(dtype)) * 2.0;
  return logits.softmax(1);
}

inline torch::Tensor randn(std::vector<int64_t> shape, std::uint64_t seed,
                           torch::Dtype dtype = torch::kFloat64) {
  auto gen = at::detail::createCPUGenerator(seed);
  return at::randn(shape, gen, torch::TensorOptions().dtype(dtype));
}

inline bool bit_equal(const torch::Tensor& a, const torch::Tensor& b) {
  return a.sizes() == b.sizes() && a.scalar_type() == b.scalar_type() && torch::equal(a, b);
}

}  // namespace testutil
