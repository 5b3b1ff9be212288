#pragma once

#include <filesystem>
#include <map>
#include <string>

#include "pclmix/model.hpp"

namespace pclmix::checkpoint {

/// Single-file archive: "PCLMIXCK", u32 version, u64 header size, a JSON
/// header (net config, metadata, tensor index) and raw little-endian float32
/// tensor data in name order. Identical states give identical bytes.
void save(const std::filesystem::path& path, model::SegNet& net,
          const std::map<std::string, std::string>& metadata = {});

struct Loaded {
  model::SegNet net{nullptr};
  std::map<std::string, std::string> metadata;
};

Loaded load(const std::filesystem::path& path);

/// Reads only the embedded network configuration.
model::NetConfig read_config(const std::filesystem::path& path);

}  // namespace pclmix::checkpoint
