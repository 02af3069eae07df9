#include "pyr/features.hpp"

#include <cmath>
#include <numbers>

#include "util/errors.hpp"

namespace carfluents {

FeatureGrid extract_features(const Frame& frame, int cell_size, const ChannelSpec& spec) {
  if (cell_size < 2) fail_invalid("extract_features: cell_size must be >= 2");
  if (spec.orientation_bins < 1) fail_invalid("extract_features: need >= 1 orientation bin");
  const int pw = frame.width();
  const int ph = frame.height();
  if (pw < cell_size || ph < cell_size) fail_invalid("extract_features: frame smaller than one cell");

  const int gw = (pw + cell_size - 1) / cell_size;
  const int gh = (ph + cell_size - 1) / cell_size;
  const int bins = spec.orientation_bins;
  FeatureGrid grid(gw, gh, spec.channels());
  Grid2D<float> cell_sum(gw, gh, 0.0f);
  Grid2D<int> cell_count(gw, gh, 0);

  const double bin_width = std::numbers::pi / bins;
  auto pixel = [&](int x, int y) {
    return frame.intensity.at(std::clamp(x, 0, pw - 1), std::clamp(y, 0, ph - 1));
  };

  for (int y = 0; y < ph; ++y) {
    const int cy = y / cell_size;
    for (int x = 0; x < pw; ++x) {
      const int cx = x / cell_size;
      const double gx = 0.5 * (pixel(x + 1, y) - pixel(x - 1, y));
      const double gy = 0.5 * (pixel(x, y + 1) - pixel(x, y - 1));
      const double mag = std::sqrt(gx * gx + gy * gy);
      if (mag > 0.0) {
        double theta = std::atan2(gy, gx);
        if (theta < 0.0) theta += std::numbers::pi;
        if (theta >= std::numbers::pi) theta -= std::numbers::pi;
        int bin = static_cast<int>(theta / bin_width);
        if (bin >= bins) bin = bins - 1;
        grid.at(cx, cy, bin) += static_cast<float>(mag);
      }
      cell_sum.at(cx, cy) += frame.intensity.at(x, y);
      cell_count.at(cx, cy) += 1;
    }
  }

  for (int cy = 0; cy < gh; ++cy) {
    for (int cx = 0; cx < gw; ++cx) {
      if (spec.intensity_channel)
        grid.at(cx, cy, bins) = cell_sum.at(cx, cy) / cell_count.at(cx, cy);
      double norm2 = 0.0;
      for (int c = 0; c < grid.channels(); ++c) {
        const double v = grid.at(cx, cy, c);
        norm2 += v * v;
      }
      const double norm = std::sqrt(norm2);
      if (norm > 1.0) {
        for (int c = 0; c < grid.channels(); ++c)
          grid.at(cx, cy, c) = static_cast<float>(grid.at(cx, cy, c) / norm);
      }
    }
  }
  return grid;
}

}  // namespace carfluents
