#pragma once

#include <span>

#include "util/grid.hpp"

namespace carfluents {

/// Dense correlation of a w x h x C template over a feature grid.
/// Output is (W-w+1) x (H-h+1); entry (x, y) is the dot product of the
/// template with the window anchored at (x, y). Accumulation order is
/// window row, then column, then channel (tests and oracles rely on it).
Grid2D<double> filter_response(const FeatureGrid& grid, std::span<const double> weights,
                               int tw, int th);

}  // namespace carfluents
