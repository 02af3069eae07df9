#pragma once

#include "pyr/frame.hpp"
#include "util/grid.hpp"

namespace carfluents {

/// Block-matching flow at cell resolution: per cell, the displacement (in
/// whole cells, |u|,|v| <= search_radius) minimizing the sum of absolute
/// pixel differences over a block x block cell window. Ties prefer the
/// smallest displacement magnitude, then lexicographic (u, v).
FlowGrid estimate_flow(const Frame& frame_a, const Frame& frame_b, int cell_size,
                       int block, int search_radius);

}  // namespace carfluents
