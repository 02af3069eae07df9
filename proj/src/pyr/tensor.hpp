#pragma once

#include <string>
#include <vector>

#include "util/grid.hpp"

namespace carfluents {

inline constexpr std::uint32_t kTensorVersion = 1;

/// Binary tensor file: magic "STAT", u32 version, u32 W, u32 H, u32 C,
/// then W*H*C float32, little-endian, y-major then x then channel.
void save_tensor(const FeatureGrid& grid, const std::string& path);
FeatureGrid load_tensor(const std::string& path);

/// Flow grids ride the same container with C = 2 (u, v).
void save_flow_tensor(const FlowGrid& flow, const std::string& path);
FlowGrid load_flow_tensor(const std::string& path);

struct TensorManifestEntry {
  std::string path;
  double scale = 1.0;
};

/// Manifest JSON listing one tensor file per pyramid level.
void save_tensor_manifest(const std::vector<TensorManifestEntry>& levels,
                          const std::string& path);
std::vector<TensorManifestEntry> load_tensor_manifest(const std::string& path);

struct FeaturePyramid;  // pyr/pyramid.hpp

/// Whole-pyramid persistence: <prefix>_level%02d.bin per level plus
/// <prefix>.manifest.json. Precomputed features enter detection this way
/// when no frame images exist.
void save_feature_pyramid(const FeaturePyramid& pyr, const std::string& prefix);
FeaturePyramid load_feature_pyramid(const std::string& manifest_path, int cell_size,
                                    int interval);

}  // namespace carfluents
