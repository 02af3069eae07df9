#include <cmath>

#include "doctest.h"
#include "pyr/features.hpp"
#include "pyr/filter.hpp"
#include "pyr/flow.hpp"
#include "pyr/frame.hpp"
#include "pyr/pyramid.hpp"
#include "pyr/tensor.hpp"
#include "util/errors.hpp"
#include "util/rng.hpp"

using namespace carfluents;

namespace {

Frame make_frame(int w, int h, float fill = 0.0f) {
  Frame f;
  f.intensity = Grid2D<float>(w, h, fill);
  return f;
}

Frame textured_frame(int w, int h, std::uint64_t seed) {
  Rng rng(seed);
  Frame f = make_frame(w, h);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) f.intensity.at(x, y) = static_cast<float>(rng.next_double());
  return f;
}

Frame rot90_ccw(const Frame& in) {
  Frame out = make_frame(in.height(), in.width());
  for (int y = 0; y < in.height(); ++y)
    for (int x = 0; x < in.width(); ++x) out.intensity.at(y, in.width() - 1 - x) = in.intensity.at(x, y);
  return out;
}

}  // namespace

TEST_CASE("constant frame gives zero orientation bins and raw intensity") {
  const Frame f = make_frame(16, 16, 0.625f);
  const auto grid = extract_features(f, 4, ChannelSpec{});
  CHECK(grid.width() == 4);
  CHECK(grid.height() == 4);
  CHECK(grid.channels() == 10);
  for (int y = 0; y < 4; ++y)
    for (int x = 0; x < 4; ++x) {
      for (int b = 0; b < 9; ++b) CHECK(grid.at(x, y, b) == 0.0f);
      CHECK(grid.at(x, y, 9) == doctest::Approx(0.625).epsilon(1e-6));
    }
}

TEST_CASE("vertical step edge concentrates mass in the horizontal-gradient bin") {
  Frame f = make_frame(24, 16, 0.1f);
  for (int y = 0; y < 16; ++y)
    for (int x = 12; x < 24; ++x) f.intensity.at(x, y) = 0.9f;
  const auto grid = extract_features(f, 4, ChannelSpec{});

  // Finite-difference oracle: gradients are purely horizontal, so all mass
  // lands in the bin containing theta = 0.
  for (int y = 0; y < grid.height(); ++y) {
    for (int x = 0; x < grid.width(); ++x) {
      double other = 0.0;
      for (int b = 1; b < 9; ++b) other += grid.at(x, y, b);
      CHECK(other == doctest::Approx(0.0));
    }
  }
  double edge_mass = 0.0;
  for (int y = 0; y < grid.height(); ++y) edge_mass += grid.at(2, y, 0) + grid.at(3, y, 0);
  CHECK(edge_mass > 0.0);
}

TEST_CASE("90-degree rotation permutes orientation bins (6-bin spec)") {
  const ChannelSpec spec{6, true};
  const Frame f = textured_frame(20, 28, 99);
  const Frame r = rot90_ccw(f);
  const auto a = extract_features(f, 4, spec);
  const auto b = extract_features(r, 4, spec);
  REQUIRE(b.width() == a.height());
  REQUIRE(b.height() == a.width());
  // Cell (x, y) in the original maps to (y, W-1-x) in the rotated grid;
  // orientations shift by 90 degrees = 3 of 6 bins.
  for (int y = 0; y < a.height(); ++y) {
    for (int x = 0; x < a.width(); ++x) {
      for (int bin = 0; bin < 6; ++bin) {
        const float va = a.at(x, y, bin);
        const float vb = b.at(y, a.width() - 1 - x, (bin + 3) % 6);
        CHECK(va == doctest::Approx(vb).epsilon(1e-6));
      }
      CHECK(a.at(x, y, 6) == doctest::Approx(b.at(y, a.width() - 1 - x, 6)).epsilon(1e-6));
    }
  }
}

TEST_CASE("build_pyramid halves grids until the floor") {
  const Frame f = textured_frame(64, 64, 3);
  const auto pyr = build_pyramid(f, 8, 1, 2, ChannelSpec{});
  REQUIRE(pyr.level_count() == 3);
  CHECK(pyr.levels[0].features.width() == 8);
  CHECK(pyr.levels[1].features.width() == 4);
  CHECK(pyr.levels[2].features.width() == 2);
  CHECK(pyr.levels[0].scale == 1.0);
  CHECK(pyr.levels[1].scale == doctest::Approx(0.5));
  CHECK(pyr.levels[2].scale == doctest::Approx(0.25));
}

TEST_CASE("interval 2 produces the 2^(-k/2) scale ladder") {
  const Frame f = textured_frame(64, 64, 4);
  const auto pyr = build_pyramid(f, 8, 2, 2, ChannelSpec{});
  REQUIRE(pyr.level_count() >= 3);
  CHECK(pyr.levels[0].scale == 1.0);
  CHECK(pyr.levels[1].scale == doctest::Approx(std::pow(2.0, -0.5)));
  CHECK(pyr.levels[2].scale == doctest::Approx(0.5));
}

TEST_CASE("next octave matches features of a half-downsampled frame") {
  // Piecewise-constant content; interpolation noise must stay under 1e-3 MAD.
  Frame f = make_frame(64, 48, 0.2f);
  for (int y = 8; y < 32; ++y)
    for (int x = 16; x < 48; ++x) f.intensity.at(x, y) = 0.85f;
  const auto pyr = build_pyramid(f, 4, 1, 2, ChannelSpec{});
  Frame half;
  half.intensity = downsample_half(f.intensity);
  const auto direct = extract_features(half, 4, ChannelSpec{});
  const auto& level1 = pyr.levels[1].features;
  REQUIRE(direct.width() == level1.width());
  REQUIRE(direct.height() == level1.height());
  double mad = 0.0;
  int count = 0;
  for (int y = 0; y < direct.height(); ++y)
    for (int x = 0; x < direct.width(); ++x)
      for (int c = 0; c < direct.channels(); ++c) {
        mad += std::abs(direct.at(x, y, c) - level1.at(x, y, c));
        ++count;
      }
  CHECK(mad / count < 1e-3);
}

TEST_CASE("identical frames give zero flow; constant frames tie-break to zero") {
  const Frame a = textured_frame(32, 32, 5);
  const auto flow = estimate_flow(a, a, 4, 2, 3);
  for (int y = 0; y < flow.height(); ++y)
    for (int x = 0; x < flow.width(); ++x) {
      CHECK(flow.at(x, y).u == 0.0f);
      CHECK(flow.at(x, y).v == 0.0f);
    }
  const Frame c1 = make_frame(32, 32, 0.5f);
  const auto tied = estimate_flow(c1, c1, 4, 2, 3);
  CHECK(tied.at(3, 3).u == 0.0f);
  CHECK(tied.at(3, 3).v == 0.0f);
}

TEST_CASE("pure translation recovers the shift on interior cells") {
  const int cell = 4;
  const Frame a = textured_frame(48, 32, 11);
  Frame b = make_frame(48, 32);
  for (int y = 0; y < 32; ++y)
    for (int x = 0; x < 48; ++x) {
      const int sx = x - 3 * cell;  // shift 3 cells right
      b.intensity.at(x, y) = a.intensity.at(std::clamp(sx, 0, 47), y);
    }
  const auto flow = estimate_flow(a, b, cell, 2, 4);
  for (int y = 2; y < flow.height() - 2; ++y)
    for (int x = 2; x < flow.width() - 5; ++x) {
      CHECK(flow.at(x, y).u == 3.0f);
      CHECK(flow.at(x, y).v == 0.0f);
    }
  // Inverse symmetry on interior cells.
  const auto back = estimate_flow(b, a, cell, 2, 4);
  for (int y = 2; y < flow.height() - 2; ++y)
    for (int x = 5; x < flow.width() - 2; ++x) {
      CHECK(back.at(x, y).u == -3.0f);
      CHECK(back.at(x, y).v == 0.0f);
    }
}

TEST_CASE("flow pyramid averages and rescales") {
  const Frame f = textured_frame(64, 64, 21);
  const auto pyr = build_pyramid(f, 8, 1, 2, ChannelSpec{});
  FlowGrid level0(8, 8);
  SUBCASE("uniform flow halves at the next octave") {
    for (int y = 0; y < 8; ++y)
      for (int x = 0; x < 8; ++x) level0.at(x, y) = Vec2f{4.0f, 0.0f};
    const auto fp = flow_pyramid(level0, pyr);
    CHECK(fp.levels[1].at(1, 1).u == doctest::Approx(2.0));
    CHECK(fp.levels[1].at(1, 1).v == doctest::Approx(0.0));
  }
  SUBCASE("zero flow stays zero") {
    const auto fp = flow_pyramid(level0, pyr);
    for (const auto& lv : fp.levels)
      for (int y = 0; y < lv.height(); ++y)
        for (int x = 0; x < lv.width(); ++x) {
          CHECK(lv.at(x, y).u == 0.0f);
          CHECK(lv.at(x, y).v == 0.0f);
        }
  }
  SUBCASE("coarse cells average their fine children") {
    Rng rng(17);
    for (int y = 0; y < 8; ++y)
      for (int x = 0; x < 8; ++x)
        level0.at(x, y) =
            Vec2f{static_cast<float>(rng.uniform(-2, 2)), static_cast<float>(rng.uniform(-2, 2))};
    const auto fp = flow_pyramid(level0, pyr);
    for (int y = 0; y < 4; ++y)
      for (int x = 0; x < 4; ++x) {
        double u = 0.0, v = 0.0;
        for (int dy = 0; dy < 2; ++dy)
          for (int dx = 0; dx < 2; ++dx) {
            u += level0.at(2 * x + dx, 2 * y + dy).u;
            v += level0.at(2 * x + dx, 2 * y + dy).v;
          }
        CHECK(fp.levels[1].at(x, y).u == doctest::Approx(u / 4.0 * 0.5).epsilon(1e-5));
        CHECK(fp.levels[1].at(x, y).v == doctest::Approx(v / 4.0 * 0.5).epsilon(1e-5));
      }
  }
}

TEST_CASE("filter_response basics and linearity") {
  Rng rng(31);
  FeatureGrid grid(8, 8, 3);
  for (int y = 0; y < 8; ++y)
    for (int x = 0; x < 8; ++x)
      for (int c = 0; c < 3; ++c) grid.at(x, y, c) = static_cast<float>(rng.uniform(-1, 1));

  SUBCASE("all-ones 1x1 template sums channels") {
    const std::vector<double> ones(3, 1.0);
    const auto resp = filter_response(grid, ones, 1, 1);
    for (int y = 0; y < 8; ++y)
      for (int x = 0; x < 8; ++x) {
        double sum = 0.0;
        for (int c = 0; c < 3; ++c) sum += grid.at(x, y, c);
        CHECK(resp.at(x, y) == doctest::Approx(sum).epsilon(1e-12));
      }
  }
  SUBCASE("zero template gives zero map") {
    const std::vector<double> zeros(3 * 4, 0.0);
    const auto resp = filter_response(grid, zeros, 2, 2);
    for (int y = 0; y < resp.height(); ++y)
      for (int x = 0; x < resp.width(); ++x) CHECK(resp.at(x, y) == 0.0);
  }
  SUBCASE("random template equals naive correlation and is linear") {
    std::vector<double> t1(3 * 9), t2(3 * 9);
    for (auto& v : t1) v = rng.uniform(-1, 1);
    for (auto& v : t2) v = rng.uniform(-1, 1);
    const auto r1 = filter_response(grid, t1, 3, 3);
    // naive triple loop
    for (int y = 0; y < r1.height(); ++y)
      for (int x = 0; x < r1.width(); ++x) {
        double acc = 0.0;
        std::size_t wi = 0;
        for (int wy = 0; wy < 3; ++wy)
          for (int wx = 0; wx < 3; ++wx)
            for (int c = 0; c < 3; ++c) acc += t1[wi++] * grid.at(x + wx, y + wy, c);
        REQUIRE(r1.at(x, y) == acc);
      }
    std::vector<double> combo(3 * 9);
    for (std::size_t i = 0; i < combo.size(); ++i) combo[i] = 2.0 * t1[i] - 0.5 * t2[i];
    const auto r2 = filter_response(grid, t2, 3, 3);
    const auto rc = filter_response(grid, combo, 3, 3);
    for (int y = 0; y < rc.height(); ++y)
      for (int x = 0; x < rc.width(); ++x)
        CHECK(rc.at(x, y) == doctest::Approx(2.0 * r1.at(x, y) - 0.5 * r2.at(x, y)).epsilon(1e-9));
  }
}

TEST_CASE("tensor files round-trip and PGM round-trips") {
  Rng rng(41);
  FeatureGrid grid(5, 3, 4);
  for (int y = 0; y < 3; ++y)
    for (int x = 0; x < 5; ++x)
      for (int c = 0; c < 4; ++c) grid.at(x, y, c) = static_cast<float>(rng.uniform(-2, 2));
  const std::string path = "test_tensor.bin";
  save_tensor(grid, path);
  const auto back = load_tensor(path);
  REQUIRE(back.width() == 5);
  REQUIRE(back.height() == 3);
  REQUIRE(back.channels() == 4);
  CHECK(back.raw() == grid.raw());

  Frame f = textured_frame(17, 9, 5);
  save_pgm(f, "test_frame.pgm");
  const Frame g = load_pgm("test_frame.pgm");
  REQUIRE(g.width() == 17);
  REQUIRE(g.height() == 9);
  for (int y = 0; y < 9; ++y)
    for (int x = 0; x < 17; ++x)
      CHECK(std::abs(g.intensity.at(x, y) - f.intensity.at(x, y)) <= 0.5f / 255.0f + 1e-6f);
}

TEST_CASE("extract_features rejects sub-cell frames") {
  const Frame tiny = make_frame(3, 3, 0.0f);
  CHECK_THROWS_AS(extract_features(tiny, 4, ChannelSpec{}), Error);
}
