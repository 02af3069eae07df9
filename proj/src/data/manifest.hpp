#pragma once

#include <string>
#include <vector>

namespace carfluents {

struct ManifestEntry {
  std::string video_dir;    // directory of frame_%04d.pgm files
  std::string annotation;   // annotation JSON path
  std::string split;        // "train" or "test"
};

using DatasetManifest = std::vector<ManifestEntry>;

void save_manifest(const DatasetManifest& manifest, const std::string& path);
DatasetManifest load_manifest(const std::string& path);

/// Entries of one split ("train"/"test"); empty split selects everything.
DatasetManifest filter_split(const DatasetManifest& manifest, const std::string& split);

/// Sorted frame paths of a video directory (frame_*.pgm).
std::vector<std::string> list_video_frames(const std::string& video_dir);

}  // namespace carfluents
