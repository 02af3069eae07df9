#pragma once

#include <string>

#include "util/grid.hpp"

namespace carfluents {

/// Grayscale frame, intensities in [0, 1].
struct Frame {
  int index = 0;
  Grid2D<float> intensity;

  int width() const { return intensity.width(); }
  int height() const { return intensity.height(); }

  void clamp01();
};

/// Binary PGM (P5), 8-bit.
Frame load_pgm(const std::string& path);
void save_pgm(const Frame& frame, const std::string& path);

/// Bilinear resample to (new_w, new_h). Used for pyramid level construction.
Grid2D<float> resize_bilinear(const Grid2D<float>& src, int new_w, int new_h);

/// Exact 2x2 box-filter downsample (dims halved, rounding up at odd edges).
Grid2D<float> downsample_half(const Grid2D<float>& src);

/// Mean intensity inside a pixel box (clipped to the frame); empty clip gives 0.
double mean_intensity(const Frame& frame, double x, double y, double w, double h);

}  // namespace carfluents
