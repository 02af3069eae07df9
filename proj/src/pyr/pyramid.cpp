#include "pyr/pyramid.hpp"

#include <cmath>

#include "util/errors.hpp"

namespace carfluents {

FeaturePyramid build_pyramid(const Frame& frame, int cell_size, int interval,
                             int min_level_cells, const ChannelSpec& spec) {
  if (interval < 1) fail_invalid("build_pyramid: interval must be >= 1");
  FeaturePyramid pyr;
  pyr.cell_size = cell_size;
  pyr.interval = interval;
  pyr.channel_spec = spec;

  // One resampled frame per level. Octave steps reuse the frame one octave
  // up via an exact half-box filter; fractional steps resample the original.
  std::vector<Grid2D<float>> frames;
  for (int k = 0;; ++k) {
    const double scale = std::pow(2.0, -static_cast<double>(k) / interval);
    Grid2D<float> resampled;
    if (k == 0) {
      resampled = frame.intensity;
    } else if (k >= interval) {
      resampled = downsample_half(frames[k - interval]);
    } else {
      const int rw = static_cast<int>(std::ceil(frame.width() * scale));
      const int rh = static_cast<int>(std::ceil(frame.height() * scale));
      resampled = resize_bilinear(frame.intensity, rw, rh);
    }
    const int gw = (resampled.width() + cell_size - 1) / cell_size;
    const int gh = (resampled.height() + cell_size - 1) / cell_size;
    if (gw < min_level_cells || gh < min_level_cells) break;
    if (resampled.width() < cell_size || resampled.height() < cell_size) break;
    Frame level_frame{frame.index, resampled};
    PyramidLevel level;
    level.scale = scale;
    level.features = extract_features(level_frame, cell_size, spec);
    pyr.levels.push_back(std::move(level));
    frames.push_back(std::move(level_frame.intensity));
  }
  if (pyr.levels.empty()) fail_invalid("build_pyramid: frame below min_level_cells at level 0");
  return pyr;
}

FlowPyramid flow_pyramid(const FlowGrid& flow_level0, const FeaturePyramid& geometry) {
  FlowPyramid out;
  for (int li = 0; li < geometry.level_count(); ++li) {
    const auto& feat = geometry.levels[li].features;
    const double scale = geometry.levels[li].scale;
    FlowGrid grid(feat.width(), feat.height());
    const double rx = static_cast<double>(flow_level0.width()) / feat.width();
    const double ry = static_cast<double>(flow_level0.height()) / feat.height();
    for (int y = 0; y < feat.height(); ++y) {
      const double sy0 = y * ry;
      const double sy1 = (y + 1) * ry;
      for (int x = 0; x < feat.width(); ++x) {
        const double sx0 = x * rx;
        const double sx1 = (x + 1) * rx;
        double acc_u = 0.0, acc_v = 0.0, acc_w = 0.0;
        const int iy0 = static_cast<int>(std::floor(sy0));
        const int iy1 = std::min(flow_level0.height() - 1,
                                 static_cast<int>(std::ceil(sy1)) - 1);
        const int ix0 = static_cast<int>(std::floor(sx0));
        const int ix1 = std::min(flow_level0.width() - 1,
                                 static_cast<int>(std::ceil(sx1)) - 1);
        for (int sy = iy0; sy <= iy1; ++sy) {
          const double wy = std::min<double>(sy + 1, sy1) - std::max<double>(sy, sy0);
          if (wy <= 0.0) continue;
          for (int sx = ix0; sx <= ix1; ++sx) {
            const double wx = std::min<double>(sx + 1, sx1) - std::max<double>(sx, sx0);
            if (wx <= 0.0) continue;
            const double w = wx * wy;
            acc_u += w * flow_level0.at(sx, sy).u;
            acc_v += w * flow_level0.at(sx, sy).v;
            acc_w += w;
          }
        }
        Vec2f f;
        if (acc_w > 0.0) {
          f.u = static_cast<float>(acc_u / acc_w * scale);
          f.v = static_cast<float>(acc_v / acc_w * scale);
        }
        grid.at(x, y) = f;
      }
    }
    out.levels.push_back(std::move(grid));
    out.scales.push_back(scale);
  }
  return out;
}

}  // namespace carfluents
