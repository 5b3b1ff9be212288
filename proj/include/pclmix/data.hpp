#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "pclmix/types.hpp"

namespace pclmix::data {

/// One annotated slice. image is float32 [H, W] in [0, 1]; scribble and
/// dense are int64 [H, W]. Unlabeled scribble pixels hold kIgnore.
struct Sample {
  std::string id;
  torch::Tensor image;
  torch::Tensor scribble;
  std::optional<torch::Tensor> dense;
  int fold = 0;

  int height() const { return static_cast<int>(image.size(0)); }
  int width() const { return static_cast<int>(image.size(1)); }
};

/// Samples stacked along a leading batch dimension. dense is undefined unless
/// every sample carries a dense mask.
struct Batch {
  std::vector<std::string> ids;
  torch::Tensor images;     // float32 [B, H, W]
  torch::Tensor scribbles;  // int64 [B, H, W]
  torch::Tensor dense;      // int64 [B, H, W] or undefined

  int64_t size() const { return images.size(0); }
};

struct SynthOptions {
  int folds = 5;
  double noise_sigma = 0.05;
  double scribble_cap = 0.10;
};

/// Synthetic cardiac-like slices: a ring (class 1) around a disk (class 2)
/// plus an adjacent ellipse (class 3) on a textured background (class 0).
/// k=3 drops the ellipse, k=2 merges ring and disk into one structure.
/// Deterministic in (n, size, k, seed); sample i depends only on (seed, i).
std::vector<Sample> generate_synthetic_dataset(int n, int size, int k, std::uint64_t seed,
                                               const SynthOptions& opts = {});

/// Dense label map of one synthetic slice, exposed for tests.
torch::Tensor synthetic_mask(int size, int k, std::uint64_t seed);

/// Thin-curve scribbles: for every class present, one branch of the class
/// region's skeleton, or a chord through its centroid when that is longer
/// (compact blobs), is labeled. All other pixels are kIgnore.
torch::Tensor scribbles_from_mask(const torch::Tensor& dense, std::uint64_t seed,
                                  double labeled_cap = 0.10);

/// Zhang-Suen thinning of a binary [H, W] grid (row-major, 0/1).
std::vector<std::uint8_t> skeletonize(std::span<const std::uint8_t> mask, int height, int width);

struct FolderOptions {
  int size = 64;     ///< output side length; 0 keeps native size
  int classes = 4;
  int folds = 5;
};

/// Loads `<dir>/images/<id>.png`, `<dir>/scribbles/<id>.png` and optional
/// `<dir>/masks/<id>.png`. Scribble value 255 means unlabeled.
std::vector<Sample> load_folder(const std::filesystem::path& dir, const FolderOptions& opts = {});
void write_folder(std::span<const Sample> samples, const std::filesystem::path& dir);

/// Bilinear resize of a float [H, W] map and nearest resize of a label map.
torch::Tensor resize_bilinear(const torch::Tensor& image, int height, int width);
torch::Tensor resize_nearest(const torch::Tensor& labels, int height, int width);

double labeled_fraction(const torch::Tensor& scribble);

Batch collate(std::span<const Sample> samples, std::span<const size_t> indices);

/// Epoch-wise shuffled batching. In training mode the trailing short batch
/// is dropped and batch_size must be at least 2.
class BatchStream {
 public:
  BatchStream(std::span<const Sample> samples, int batch_size, std::uint64_t seed, bool training);

  /// Index lists for one epoch; pure function of (seed, epoch).
  std::vector<std::vector<size_t>> epoch_indices(int epoch) const;

  /// Next batch, crossing epoch boundaries as needed.
  Batch next();

  int epoch() const { return epoch_; }
  size_t batches_per_epoch() const;

 private:
  std::span<const Sample> samples_;
  int batch_size_;
  std::uint64_t seed_;
  bool training_;
  int epoch_ = 0;
  size_t cursor_ = 0;
  std::vector<std::vector<size_t>> current_;
};

/// Splits samples into (train, held-out) by fold id.
std::pair<std::vector<Sample>, std::vector<Sample>> split_by_fold(std::span<const Sample> samples,
                                                                  int held_out_fold);

}  // namespace pclmix::data
