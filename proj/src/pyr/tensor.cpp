#include "pyr/tensor.hpp"

#include <cstdio>
#include <cstring>
#include <fstream>

#include "json.hpp"
#include "pyr/pyramid.hpp"
#include "util/errors.hpp"

namespace carfluents {

namespace {

constexpr char kMagic[4] = {'S', 'T', 'A', 'T'};

void write_u32(std::ostream& out, std::uint32_t v) {
  unsigned char b[4] = {static_cast<unsigned char>(v & 0xff),
                        static_cast<unsigned char>((v >> 8) & 0xff),
                        static_cast<unsigned char>((v >> 16) & 0xff),
                        static_cast<unsigned char>((v >> 24) & 0xff)};
  out.write(reinterpret_cast<const char*>(b), 4);
}

std::uint32_t read_u32(std::istream& in, const std::string& path) {
  unsigned char b[4];
  in.read(reinterpret_cast<char*>(b), 4);
  if (!in) fail_parse(path + ": truncated tensor header");
  return static_cast<std::uint32_t>(b[0]) | (static_cast<std::uint32_t>(b[1]) << 8) |
         (static_cast<std::uint32_t>(b[2]) << 16) | (static_cast<std::uint32_t>(b[3]) << 24);
}

void write_header(std::ostream& out, std::uint32_t w, std::uint32_t h, std::uint32_t c) {
  out.write(kMagic, 4);
  write_u32(out, kTensorVersion);
  write_u32(out, w);
  write_u32(out, h);
  write_u32(out, c);
}

struct TensorHeader {
  std::uint32_t w, h, c;
};

TensorHeader read_header(std::istream& in, const std::string& path) {
  char magic[4];
  in.read(magic, 4);
  if (!in || std::memcmp(magic, kMagic, 4) != 0) fail_parse(path + ": bad tensor magic");
  const std::uint32_t version = read_u32(in, path);
  if (version != kTensorVersion) fail_parse(path + ": unsupported tensor version");
  TensorHeader hd{};
  hd.w = read_u32(in, path);
  hd.h = read_u32(in, path);
  hd.c = read_u32(in, path);
  if (hd.w == 0 || hd.h == 0 || hd.c == 0) fail_parse(path + ": empty tensor");
  return hd;
}

void write_floats(std::ostream& out, const float* data, std::size_t n) {
  static_assert(sizeof(float) == 4);
  // Little-endian hosts write directly; this codebase targets x86-64/aarch64.
  out.write(reinterpret_cast<const char*>(data), static_cast<std::streamsize>(n * 4));
}

void read_floats(std::istream& in, float* data, std::size_t n, const std::string& path) {
  in.read(reinterpret_cast<char*>(data), static_cast<std::streamsize>(n * 4));
  if (!in) fail_parse(path + ": truncated tensor payload");
}

}  // namespace

void save_tensor(const FeatureGrid& grid, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) fail_io("cannot write " + path);
  write_header(out, grid.width(), grid.height(), grid.channels());
  write_floats(out, grid.raw().data(), grid.raw().size());
  if (!out) fail_io("short write to " + path);
}

FeatureGrid load_tensor(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail_io("cannot open " + path);
  const TensorHeader hd = read_header(in, path);
  FeatureGrid grid(static_cast<int>(hd.w), static_cast<int>(hd.h), static_cast<int>(hd.c));
  read_floats(in, grid.raw().data(), grid.raw().size(), path);
  return grid;
}

void save_flow_tensor(const FlowGrid& flow, const std::string& path) {
  FeatureGrid grid(flow.width(), flow.height(), 2);
  for (int y = 0; y < flow.height(); ++y) {
    for (int x = 0; x < flow.width(); ++x) {
      grid.at(x, y, 0) = flow.at(x, y).u;
      grid.at(x, y, 1) = flow.at(x, y).v;
    }
  }
  save_tensor(grid, path);
}

FlowGrid load_flow_tensor(const std::string& path) {
  const FeatureGrid grid = load_tensor(path);
  if (grid.channels() != 2) fail_parse(path + ": flow tensor must have 2 channels");
  FlowGrid flow(grid.width(), grid.height());
  for (int y = 0; y < grid.height(); ++y)
    for (int x = 0; x < grid.width(); ++x)
      flow.at(x, y) = Vec2f{grid.at(x, y, 0), grid.at(x, y, 1)};
  return flow;
}

void save_tensor_manifest(const std::vector<TensorManifestEntry>& levels,
                          const std::string& path) {
  nlohmann::json doc;
  doc["levels"] = nlohmann::json::array();
  for (const auto& lv : levels) doc["levels"].push_back({{"path", lv.path}, {"scale", lv.scale}});
  std::ofstream out(path);
  if (!out) fail_io("cannot write " + path);
  out << doc.dump(2) << "\n";
}

std::vector<TensorManifestEntry> load_tensor_manifest(const std::string& path) {
  std::ifstream in(path);
  if (!in) fail_io("cannot open " + path);
  nlohmann::json doc;
  try {
    in >> doc;
  } catch (const nlohmann::json::exception& e) {
    fail_parse(path + ": " + e.what());
  }
  std::vector<TensorManifestEntry> levels;
  for (const auto& lv : doc.at("levels")) {
    TensorManifestEntry entry;
    entry.path = lv.at("path").get<std::string>();
    entry.scale = lv.at("scale").get<double>();
    levels.push_back(std::move(entry));
  }
  return levels;
}

void save_feature_pyramid(const FeaturePyramid& pyr, const std::string& prefix) {
  std::vector<TensorManifestEntry> entries;
  char name[32];
  for (int li = 0; li < pyr.level_count(); ++li) {
    std::snprintf(name, sizeof(name), "_level%02d.bin", li);
    const std::string path = prefix + name;
    save_tensor(pyr.levels[static_cast<std::size_t>(li)].features, path);
    entries.push_back({path, pyr.levels[static_cast<std::size_t>(li)].scale});
  }
  save_tensor_manifest(entries, prefix + ".manifest.json");
}

FeaturePyramid load_feature_pyramid(const std::string& manifest_path, int cell_size,
                                    int interval) {
  FeaturePyramid pyr;
  pyr.cell_size = cell_size;
  pyr.interval = interval;
  double prev_scale = 2.0;
  for (const auto& entry : load_tensor_manifest(manifest_path)) {
    PyramidLevel level;
    level.scale = entry.scale;
    level.features = load_tensor(entry.path);
    if (!(level.scale < prev_scale))
      fail_parse(manifest_path + ": level scales must be strictly decreasing");
    prev_scale = level.scale;
    pyr.levels.push_back(std::move(level));
  }
  if (pyr.levels.empty()) fail_parse(manifest_path + ": no levels");
  pyr.channel_spec.orientation_bins = pyr.levels[0].features.channels() - 1;
  pyr.channel_spec.intensity_channel = true;
  return pyr;
}

}  // namespace carfluents
