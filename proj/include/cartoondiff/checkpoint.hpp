#pragma once

#include <string>
#include <vector>

#include "cartoondiff/model.hpp"

namespace cartoondiff {

// Layout (little-endian):
//   "CDIF" | u32 version | 8 x u32 ModelConfig | u32 tensor count |
//   per tensor: u32 name length, name bytes, u32 rank, rank x u32 dims, f32 data

inline constexpr std::uint32_t kCheckpointVersion = 1;

void save_checkpoint(const DenoiserParams<float>& params, const std::string& path);

/// Throws FormatError on bad magic/version/inventory and TruncationError on short files.
DenoiserParams<float> load_checkpoint(const std::string& path);

struct TensorInfo {
    std::string name;
    Shape shape;
};

struct CheckpointInfo {
    std::uint32_t version;
    ModelConfig config;
    std::vector<TensorInfo> tensors;
    std::size_t parameter_count;
};

CheckpointInfo inspect_checkpoint(const std::string& path);

}  // namespace cartoondiff
