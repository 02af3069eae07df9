#include "pyr/filter.hpp"

#include "util/errors.hpp"

namespace carfluents {

Grid2D<double> filter_response(const FeatureGrid& grid, std::span<const double> weights,
                               int tw, int th) {
  const int c = grid.channels();
  if (tw < 1 || th < 1) fail_invalid("filter_response: empty template");
  if (weights.size() != static_cast<std::size_t>(tw) * th * c)
    fail_invalid("filter_response: weight size does not match template dims");
  if (tw > grid.width() || th > grid.height())
    fail_invalid("filter_response: template larger than grid");

  const int ow = grid.width() - tw + 1;
  const int oh = grid.height() - th + 1;
  Grid2D<double> out(ow, oh, 0.0);
  for (int y = 0; y < oh; ++y) {
    for (int x = 0; x < ow; ++x) {
      double acc = 0.0;
      std::size_t wi = 0;
      for (int wy = 0; wy < th; ++wy) {
        for (int wx = 0; wx < tw; ++wx) {
          const auto cell = grid.cell(x + wx, y + wy);
          for (int ch = 0; ch < c; ++ch) acc += weights[wi++] * cell[ch];
        }
      }
      out.at(x, y) = acc;
    }
  }
  return out;
}

}  // namespace carfluents
