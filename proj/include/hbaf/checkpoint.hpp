#pragma once

// Checkpoint layout: "HBAFCKPT", u32 version, u32 header length, header text
// (model config and class names as key = value lines), u32 tensor count, then
// per tensor u32 name length, name, u32 rows, u32 cols and rows*cols
// little-endian f64 values; finally the u64 FNV-1a hash of everything before it.

#include "hbaf/model.hpp"

#include <filesystem>
#include <string>
#include <vector>

namespace hbaf {

struct Checkpoint {
  ModelConfig config;
  ParameterStore params;
  std::vector<std::string> class_names;
};

void save_checkpoint(const std::filesystem::path& file, const ModelConfig& config,
                     const ParameterStore& params, const std::vector<std::string>& class_names);
/// Throws DataError on bad magic, truncation, checksum mismatch, or a tensor
/// set that does not match the stored config.
Checkpoint load_checkpoint(const std::filesystem::path& file);

}  // namespace hbaf
