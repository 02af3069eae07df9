#include "pyr/flow.hpp"

#include <cmath>
#include <cstdlib>

#include "util/errors.hpp"

namespace carfluents {

FlowGrid estimate_flow(const Frame& frame_a, const Frame& frame_b, int cell_size,
                       int block, int search_radius) {
  if (frame_a.width() != frame_b.width() || frame_a.height() != frame_b.height())
    fail_invalid("estimate_flow: frame size mismatch");
  if (block < 1 || search_radius < 0) fail_invalid("estimate_flow: bad block/radius");

  const int pw = frame_a.width();
  const int ph = frame_a.height();
  const int gw = (pw + cell_size - 1) / cell_size;
  const int gh = (ph + cell_size - 1) / cell_size;
  FlowGrid flow(gw, gh);

  auto pa = [&](int x, int y) {
    return frame_a.intensity.at(std::clamp(x, 0, pw - 1), std::clamp(y, 0, ph - 1));
  };
  auto pb = [&](int x, int y) {
    return frame_b.intensity.at(std::clamp(x, 0, pw - 1), std::clamp(y, 0, ph - 1));
  };

  const int half = block / 2;
  for (int cy = 0; cy < gh; ++cy) {
    for (int cx = 0; cx < gw; ++cx) {
      const int bx0 = (cx - half) * cell_size;
      const int by0 = (cy - half) * cell_size;
      const int bpx = block * cell_size;
      int best_u = 0, best_v = 0;
      double best_sad = 0.0;
      bool first = true;
      for (int v = -search_radius; v <= search_radius; ++v) {
        for (int u = -search_radius; u <= search_radius; ++u) {
          double sad = 0.0;
          const int dx = u * cell_size;
          const int dy = v * cell_size;
          for (int y = 0; y < bpx; ++y)
            for (int x = 0; x < bpx; ++x)
              sad += std::abs(pa(bx0 + x, by0 + y) - pb(bx0 + x + dx, by0 + y + dy));
          bool better = false;
          if (first) {
            better = true;
          } else if (sad < best_sad) {
            better = true;
          } else if (sad == best_sad) {
            const int mag = u * u + v * v;
            const int best_mag = best_u * best_u + best_v * best_v;
            if (mag < best_mag) better = true;
            else if (mag == best_mag && (u < best_u || (u == best_u && v < best_v))) better = true;
          }
          if (better) {
            best_sad = sad;
            best_u = u;
            best_v = v;
            first = false;
          }
        }
      }
      flow.at(cx, cy) = Vec2f{static_cast<float>(best_u), static_cast<float>(best_v)};
    }
  }
  return flow;
}

}  // namespace carfluents
