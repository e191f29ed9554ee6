#pragma once

#include "tdflow/network.hpp"

#include <cstdint>
#include <filesystem>
#include <string>

namespace tdflow {

/// Trained model state. `metadata_json` is a free-form JSON object (algorithm,
/// gamma, path kind, ...) written verbatim into the header.
struct Checkpoint {
  Architecture arch;
  std::string metadata_json = "{}";
  std::int64_t step = 0;
  ModelParams online;
  ModelParams target;
};

/// Binary layout (little endian):
///   "TDFLOWCK" | u32 version | u64 header length | header JSON
///   | u32 tensor count | per tensor: u32 name length, name, u32 rows, u32 cols, rows*cols f64
/// Header JSON holds {"architecture", "metadata", "step"}. Tensor names are
/// prefixed "online/" or "target/".
void save_checkpoint(const Checkpoint& ck, const std::filesystem::path& path);
Checkpoint load_checkpoint(const std::filesystem::path& path);

/// Like load_checkpoint but rejects files whose architecture differs from `expected`.
Checkpoint load_checkpoint(const std::filesystem::path& path, const Architecture& expected);

}  // namespace tdflow
