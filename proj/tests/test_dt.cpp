#include <limits>

#include "doctest.h"
#include "infer/dt.hpp"
#include "oracle/gen.hpp"
#include "oracle/naive.hpp"
#include "util/errors.hpp"
#include "util/rng.hpp"

using namespace carfluents;

namespace {
constexpr double kNegInf = -std::numeric_limits<double>::infinity();
}

TEST_CASE("distance transform keeps a constant map fixed with self argmax") {
  Grid2D<double> in(5, 4, 3.25);
  const auto res = distance_transform(in, {0.0, 1.0, 0.0, 1.0});
  for (int y = 0; y < 4; ++y)
    for (int x = 0; x < 5; ++x) {
      CHECK(res.value.at(x, y) == 3.25);
      CHECK(res.arg.at(x, y) == Cell{x, y});
    }
}

TEST_CASE("distance transform single peak example") {
  Grid2D<double> in(8, 8, 0.0);
  in.at(3, 3) = 10.0;
  const auto res = distance_transform(in, {0.0, 1.0, 0.0, 1.0});
  // out(5,4) = 10 - (2^2 + 1^2) = 5
  CHECK(res.value.at(5, 4) == doctest::Approx(5.0));
  CHECK(res.arg.at(5, 4) == Cell{3, 3});
}

TEST_CASE("distance transform rejects nonpositive quadratic weights") {
  Grid2D<double> in(3, 3, 0.0);
  CHECK_THROWS_AS(distance_transform(in, {0.0, 0.0, 0.0, 1.0}), Error);
  CHECK_THROWS_AS(distance_transform(in, {0.0, 1.0, 0.0, -0.5}), Error);
}

TEST_CASE("distance transform equals exhaustive max-convolution exactly") {
  Rng rng(20240817);
  for (int trial = 0; trial < 60; ++trial) {
    const int w = rng.uniform_int(1, 32);
    const int h = rng.uniform_int(1, 32);
    Grid2D<double> in = oracle::random_score_grid(rng, w, h, -10.0, 10.0);
    if (trial % 4 == 0) {  // masked cells
      for (int k = 0; k < w * h / 5; ++k)
        in.at(rng.next_int(w), rng.next_int(h)) = kNegInf;
    }
    const std::array<double, 4> weights{rng.uniform(-1.0, 1.0), rng.uniform(0.01, 2.0),
                                        rng.uniform(-1.0, 1.0), rng.uniform(0.01, 2.0)};
    const auto fast = distance_transform(in, weights);
    const auto slow = oracle::naive_distance_transform(in, weights);
    for (int y = 0; y < h; ++y) {
      for (int x = 0; x < w; ++x) {
        REQUIRE(fast.value.at(x, y) == slow.value.at(x, y));
        const Cell a = fast.arg.at(x, y);
        if (a.x >= 0) {
          // The argmax must reproduce the value.
          const double dx = static_cast<double>(x - a.x);
          const double dy = static_cast<double>(y - a.y);
          double v = in.at(a.x, a.y) - weights[0] * dx - weights[1] * (dx * dx);
          v = v - weights[2] * dy - weights[3] * (dy * dy);
          REQUIRE(v == fast.value.at(x, y));
        } else {
          REQUIRE(fast.value.at(x, y) == kNegInf);
        }
      }
    }
  }
}

TEST_CASE("scattered-source envelope handles strides and offsets") {
  Rng rng(7);
  for (int trial = 0; trial < 50; ++trial) {
    const int n = rng.uniform_int(1, 12);
    const int stride = rng.uniform_int(1, 3);
    const int offset = rng.uniform_int(-4, 4);
    std::vector<double> val(static_cast<std::size_t>(n));
    std::vector<int> pos(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i) {
      val[static_cast<std::size_t>(i)] = rng.uniform(-5.0, 5.0);
      pos[static_cast<std::size_t>(i)] = stride * i + offset;
    }
    const double w1 = rng.uniform(-0.5, 0.5);
    const double w2 = rng.uniform(0.05, 1.5);
    const int q_start = rng.uniform_int(-6, 0);
    const int nq = rng.uniform_int(1, 20);
    std::vector<double> ov(static_cast<std::size_t>(nq));
    std::vector<int> oa(static_cast<std::size_t>(nq));
    dt_envelope_1d(val, pos, w1, w2, q_start, nq, ov, oa);
    for (int q = 0; q < nq; ++q) {
      double best = kNegInf;
      for (int i = 0; i < n; ++i) {
        const double d = static_cast<double>(q_start + q - pos[static_cast<std::size_t>(i)]);
        best = std::max(best, val[static_cast<std::size_t>(i)] - w1 * d - w2 * (d * d));
      }
      REQUIRE(ov[static_cast<std::size_t>(q)] == best);
      const int i = oa[static_cast<std::size_t>(q)];
      REQUIRE(i >= 0);
      const double d = static_cast<double>(q_start + q - pos[static_cast<std::size_t>(i)]);
      REQUIRE(val[static_cast<std::size_t>(i)] - w1 * d - w2 * (d * d) ==
              ov[static_cast<std::size_t>(q)]);
    }
  }
}

TEST_CASE("scatter shift moves mass along rounded flow") {
  Grid2D<double> in(4, 4, kNegInf);
  in.at(1, 1) = 2.0;
  in.at(2, 2) = 5.0;
  FlowGrid flow(4, 4);
  for (int y = 0; y < 4; ++y)
    for (int x = 0; x < 4; ++x) flow.at(x, y) = Vec2f{1.0f, 0.0f};
  Grid2D<Cell> origin;
  const auto out = scatter_shift_max(in, flow, &origin);
  CHECK(out.at(2, 1) == 2.0);
  CHECK(origin.at(2, 1) == Cell{1, 1});
  CHECK(out.at(3, 2) == 5.0);
  CHECK(out.at(1, 1) == kNegInf);
}
