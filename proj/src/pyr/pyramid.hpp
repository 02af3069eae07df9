#pragma once

#include <vector>

#include "pyr/features.hpp"
#include "pyr/frame.hpp"
#include "util/grid.hpp"

namespace carfluents {

struct PyramidLevel {
  double scale = 1.0;  // frame resampled to scale * original size
  FeatureGrid features;
};

struct FeaturePyramid {
  int cell_size = 4;
  int interval = 1;  // levels per octave
  ChannelSpec channel_spec;
  std::vector<PyramidLevel> levels;  // scales strictly decreasing, levels[0] = 1.0

  int level_count() const { return static_cast<int>(levels.size()); }
  /// Cell -> pixel conversion factor at a level.
  double pixels_per_cell(int level) const { return cell_size / levels[level].scale; }
};

struct FlowPyramid {
  // Geometry matches a paired FeaturePyramid level-for-level; (u, v) in cells/frame.
  std::vector<FlowGrid> levels;
  std::vector<double> scales;
};

/// Scales follow 2^(-k/interval); stops once either grid dimension would
/// drop below min_level_cells.
FeaturePyramid build_pyramid(const Frame& frame, int cell_size, int interval,
                             int min_level_cells, const ChannelSpec& spec);

/// Resamples a level-0 cell flow grid onto every level of `geometry`,
/// scaling magnitudes by the resolution ratio.
FlowPyramid flow_pyramid(const FlowGrid& flow_level0, const FeaturePyramid& geometry);

}  // namespace carfluents
