#pragma once

#include "pyr/frame.hpp"
#include "util/grid.hpp"

namespace carfluents {

/// Appearance feature channels: unsigned oriented-gradient histogram bins
/// followed by one mean-intensity channel when enabled.
struct ChannelSpec {
  int orientation_bins = 9;
  bool intensity_channel = true;

  int channels() const { return orientation_bins + (intensity_channel ? 1 : 0); }
  bool operator==(const ChannelSpec&) const = default;
};

/// Per-cell oriented-gradient histogram + mean intensity.
/// Each cell vector is clipped to unit L2 norm (divide only when norm > 1),
/// so flat regions keep their raw intensity value.
FeatureGrid extract_features(const Frame& frame, int cell_size, const ChannelSpec& spec);

}  // namespace carfluents
