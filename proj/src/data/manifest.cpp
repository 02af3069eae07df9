#include "data/manifest.hpp"

#include <algorithm>
#include <filesystem>
#include <fstream>

#include "json.hpp"
#include "util/errors.hpp"

namespace carfluents {

void save_manifest(const DatasetManifest& manifest, const std::string& path) {
  nlohmann::json doc = nlohmann::json::array();
  for (const auto& e : manifest)
    doc.push_back({{"video", e.video_dir}, {"annotation", e.annotation}, {"split", e.split}});
  std::ofstream out(path);
  if (!out) fail_io("cannot write " + path);
  out << doc.dump(2) << "\n";
}

DatasetManifest load_manifest(const std::string& path) {
  std::ifstream in(path);
  if (!in) fail_io("cannot open " + path);
  nlohmann::json doc;
  try {
    doc = nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    fail_parse(path + ": " + e.what());
  }
  DatasetManifest manifest;
  try {
    for (const auto& je : doc) {
      ManifestEntry e;
      e.video_dir = je.at("video").get<std::string>();
      e.annotation = je.at("annotation").get<std::string>();
      e.split = je.value("split", std::string{"train"});
      manifest.push_back(std::move(e));
    }
  } catch (const nlohmann::json::exception& e) {
    fail_parse(path + ": " + e.what());
  }
  return manifest;
}

DatasetManifest filter_split(const DatasetManifest& manifest, const std::string& split) {
  if (split.empty()) return manifest;
  DatasetManifest out;
  for (const auto& e : manifest)
    if (e.split == split) out.push_back(e);
  return out;
}

std::vector<std::string> list_video_frames(const std::string& video_dir) {
  namespace fs = std::filesystem;
  std::vector<std::string> paths;
  std::error_code ec;
  for (const auto& entry : fs::directory_iterator(video_dir, ec)) {
    const auto name = entry.path().filename().string();
    if (name.rfind("frame_", 0) == 0 && entry.path().extension() == ".pgm")
      paths.push_back(entry.path().string());
  }
  if (ec) fail_io("cannot list " + video_dir + ": " + ec.message());
  if (paths.empty()) fail_io("no frame_*.pgm files in " + video_dir);
  std::sort(paths.begin(), paths.end());
  return paths;
}

}  // namespace carfluents
