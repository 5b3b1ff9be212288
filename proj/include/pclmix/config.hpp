#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "pclmix/model.hpp"
#include "pclmix/trainer.hpp"

namespace pclmix::config {

/// Everything a run needs, serializable as sorted `key=value` lines.
struct RunConfig {
  model::NetConfig net;
  trainer::TrainConfig train;
  std::string data_dir;   ///< empty: synthesize synth_n samples
  int synth_n = 250;
  std::uint64_t data_seed = 0;  ///< synthetic dataset seed, independent of the run seed
  int image_size = 64;
  int folds = 5;
  int val_fold = 0;       ///< held-out fold; -1 trains on everything
  std::string out_dir = "runs";
  std::string tag = "run";
  std::uint64_t seed = 0;
  int jobs = 1;           ///< concurrent runs in ablate/sweep

  /// Pushes the run seed into the training config.
  void sync_seed() { train.seed = seed; }
};

/// Canonical text: one `key=value` per line, keys sorted, shortest
/// round-trip number formatting. parse(serialize(c)) reproduces c exactly.
std::string serialize(const RunConfig& cfg);

/// Applies `key=value` lines (blank lines and `#` comments ignored).
/// Unknown keys throw with the list of valid keys.
void apply_text(RunConfig& cfg, const std::string& text);
void set_value(RunConfig& cfg, const std::string& key, const std::string& value);
RunConfig parse(const std::string& text);

RunConfig load_file(const std::filesystem::path& path);
void save_file(const std::filesystem::path& path, const RunConfig& cfg);

std::vector<std::string> valid_keys();

}  // namespace pclmix::config
