#pragma once

#include <filesystem>
#include <string>

#include "pclmix/config.hpp"

namespace pclmix::cli {

/// Entry point of the `pclmix` tool. Returns the process exit code; failures
/// print a single `error: ...` line to stderr.
int run(int argc, char** argv);

/// `<out>/<UTC timestamp>_<tag>`, suffixed `_2`, `_3`, ... if taken.
std::filesystem::path make_run_dir(const std::filesystem::path& out, const std::string& tag);

/// Synthetic samples or a folder, as selected by the config.
std::vector<data::Sample> load_dataset(const config::RunConfig& cfg);

}  // namespace pclmix::cli
