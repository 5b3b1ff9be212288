#pragma once

#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "pclmix/config.hpp"
#include "pclmix/data.hpp"
#include "pclmix/model.hpp"

namespace pclmix::eval {

/// 2|A∩B| / (|A| + |B|) for class `cls`; both empty -> 1, one empty -> 0.
double dice(const torch::Tensor& pred, const torch::Tensor& gt, int64_t cls);

/// 95th percentile (linear interpolation) of the pooled directed distances
/// between the 4-adjacency boundaries of the two class masks, in pixels.
/// Both empty -> 0, one empty -> image diagonal.
double hd95(const torch::Tensor& pred, const torch::Tensor& gt, int64_t cls);

/// Boundary pixels of a binary [H, W] mask: set pixels with a 4-neighbor
/// outside the mask or on the image edge.
std::vector<std::uint8_t> boundary(std::span<const std::uint8_t> mask, int height, int width);

/// Exact squared Euclidean distance transform to the set pixels of `sites`.
std::vector<double> squared_distance_transform(std::span<const std::uint8_t> sites, int height,
                                               int width);

/// Linear-interpolation percentile (q in [0, 100]) of unsorted values.
double percentile(std::vector<double> values, double q);

struct Summary {
  double mean = 0;
  double std = 0;  ///< population standard deviation
  int count = 0;

  static Summary of(std::span<const double> values);
};

struct ClassMetrics {
  int64_t cls = 0;
  std::string name;
  Summary dice;
  Summary hd95;
};

struct SampleMetrics {
  std::string id;
  std::vector<double> dice;  ///< indexed by class; NaN when absent from ground truth
  std::vector<double> hd95;
};

/// Per-class and averaged Dice / HD95 over samples. Classes are listed in
/// display order (RV, Myo, LV for the 4-class layout); background excluded.
struct MetricTable {
  std::vector<ClassMetrics> classes;
  Summary avg_dice;  ///< over samples of the per-sample class average
  Summary avg_hd95;
  std::vector<SampleMetrics> samples;
};

/// Display names and order of the foreground classes.
std::vector<std::pair<int64_t, std::string>> class_layout(int classes);

MetricTable summarize(std::vector<SampleMetrics> samples, int classes);

/// Scores the CNN decoder's argmax on samples carrying dense masks.
MetricTable evaluate(model::SegNet& net, std::span<const data::Sample> samples, int batch_size = 16);

std::string table_csv_header(const MetricTable& t);
std::string table_csv_row(const std::string& label, const MetricTable& t);
void write_metrics_csv(const std::filesystem::path& path, const std::string& label,
                       const MetricTable& t);

struct CrossValidation {
  std::vector<MetricTable> folds;
  MetricTable pooled;  ///< every sample scored once by the model that held it out
};

/// Trains on folds != i and evaluates on fold i (fold = sample.fold % folds).
CrossValidation cross_validate(std::span<const data::Sample> dataset, int folds,
                               const config::RunConfig& cfg,
                               const std::filesystem::path& out_dir = {});

struct ExperimentRow {
  std::string label;
  std::string dir;
  config::RunConfig cfg;
  MetricTable metrics;
};

/// The seven objective configurations of the ablation table, in order.
std::vector<std::pair<std::string, trainer::AblationFlags>> ablation_configs();

/// Trains every ablation configuration under identical seeds and budget,
/// one subdirectory per row, and writes ablation.csv.
std::vector<ExperimentRow> ablate(std::span<const data::Sample> train,
                                  std::span<const data::Sample> val,
                                  const config::RunConfig& base,
                                  const std::filesystem::path& out_dir);

inline const std::vector<double> kLambdaTGrid{0.1, 0.2, 0.3, 0.4, 0.5};
inline const std::vector<double> kLambdaCtrGrid{0.05, 0.10, 0.15, 0.2, 0.3};

/// One run per value of `param` ("lambda_t" or "lambda_ctr"); writes
/// sweep.csv and sweep.png.
std::vector<ExperimentRow> sweep(std::span<const data::Sample> train,
                                 std::span<const data::Sample> val, const config::RunConfig& base,
                                 const std::string& param, std::vector<double> values,
                                 const std::filesystem::path& out_dir);

/// Overlay of a label map on the image, for qualitative export.
void write_prediction_png(const std::filesystem::path& path, const torch::Tensor& image,
                          const torch::Tensor& labels);

}  // namespace pclmix::eval
