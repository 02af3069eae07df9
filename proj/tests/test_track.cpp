#include <cmath>

#include "doctest.h"
#include "oracle/naive.hpp"
#include "track/viterbi.hpp"
#include "util/errors.hpp"
#include "util/rng.hpp"

using namespace carfluents;

namespace {

TrackProposal proposal(int frame, double x, double y, double w, double h, double unary,
                       int status = 1) {
  return TrackProposal{frame, BoxF{x, y, w, h}, status, unary};
}

std::vector<std::vector<TrackProposal>> random_instance(Rng& rng, int frames, int k) {
  std::vector<std::vector<TrackProposal>> out(static_cast<std::size_t>(frames));
  for (int i = 0; i < frames; ++i) {
    for (int j = 0; j < k; ++j) {
      out[static_cast<std::size_t>(i)].push_back(
          proposal(i, rng.uniform(0, 40), rng.uniform(0, 40), rng.uniform(4, 16),
                   rng.uniform(4, 16), rng.uniform(-2, 2)));
    }
  }
  return out;
}

}  // namespace

TEST_CASE("transition_feature matches the definition") {
  const auto a = proposal(0, 0, 0, 10, 10, 0.0);
  CHECK(transition_feature(a, a) == std::array<double, 6>{0, 0, 0, 0, 0, 0});

  const auto b = proposal(1, 10, 0, 10, 10, 0.0);  // +10 px in x, scale 10
  const auto f = transition_feature(a, b);
  CHECK(f[0] == doctest::Approx(1.0));
  CHECK(f[1] == doctest::Approx(1.0));
  CHECK(f[2] == 0.0);
  CHECK(f[3] == 0.0);
  CHECK(f[4] == 0.0);
  CHECK(f[5] == 0.0);

  const auto c = proposal(1, -5, -5, 20, 20, 0.0);  // doubled scale, same center
  const auto fs = transition_feature(a, c);
  CHECK(fs[4] == doctest::Approx(std::log(2.0)).epsilon(1e-9));
  CHECK(fs[5] == doctest::Approx(std::log(2.0) * std::log(2.0)).epsilon(1e-9));

  const auto zero = proposal(1, 0, 0, 0, 10, 0.0);
  CHECK_THROWS_AS(transition_feature(a, zero), Error);
}

TEST_CASE("box overlap basics") {
  const BoxF a{0, 0, 1, 1};
  CHECK(box_iou(a, a) == 1.0);
  CHECK(box_iou(a, BoxF{5, 5, 1, 1}) == 0.0);
  CHECK(box_iou(a, BoxF{0.5, 0, 1, 1}) == doctest::Approx(1.0 / 3.0));
  CHECK(box_iou(a, BoxF{0, 0, 0, 0}) == 0.0);
}

TEST_CASE("forced path sums unaries, transitions and overlaps") {
  std::vector<std::vector<TrackProposal>> frames;
  frames.push_back({proposal(0, 0, 0, 10, 10, 1.0)});
  frames.push_back({proposal(1, 2, 0, 10, 10, 2.0)});
  frames.push_back({proposal(2, 4, 0, 10, 10, 3.0)});
  const std::array<double, 6> theta{0.1, 0.2, 0.0, 0.2, 0.0, 0.1};
  const double lambda = 1.5;
  const auto track = viterbi_link("door", frames, theta, lambda);
  double expect = 1.0 + 2.0 + 3.0;
  for (int i = 0; i < 2; ++i) {
    const auto f = transition_feature(frames[static_cast<std::size_t>(i)][0],
                                      frames[static_cast<std::size_t>(i + 1)][0]);
    expect += transition_score(theta, f) +
              lambda * box_iou(frames[static_cast<std::size_t>(i)][0].box,
                               frames[static_cast<std::size_t>(i + 1)][0].box);
  }
  CHECK(track.total_score == doctest::Approx(expect).epsilon(1e-12));
  CHECK(track.chosen.size() == 3);
}

TEST_CASE("decoupled weights pick per-frame argmaxes") {
  Rng rng(220);
  auto frames = random_instance(rng, 5, 3);
  const std::array<double, 6> zero{0, 0, 0, 0, 0, 0};
  const auto track = viterbi_link("door", frames, zero, 0.0);
  for (std::size_t i = 0; i < frames.size(); ++i) {
    double best = -1e18;
    for (const auto& p : frames[i]) best = std::max(best, p.unary);
    CHECK(track.chosen[i].unary == best);
  }
}

TEST_CASE("viterbi equals exhaustive path enumeration") {
  Rng rng(4711);
  for (int trial = 0; trial < 60; ++trial) {
    const int frames = rng.uniform_int(2, 6);
    const int k = rng.uniform_int(1, 4);
    const auto inst = random_instance(rng, frames, k);
    std::array<double, 6> theta{rng.uniform(-0.5, 0.5), rng.uniform(0, 0.5),
                                rng.uniform(-0.5, 0.5), rng.uniform(0, 0.5),
                                rng.uniform(-0.5, 0.5), rng.uniform(0, 0.5)};
    const double lambda = rng.uniform(0, 2);
    const auto track = viterbi_link("p", inst, theta, lambda);
    const auto naive = oracle::naive_best_path(inst, theta, lambda);
    REQUIRE(track.total_score == doctest::Approx(naive.score).epsilon(1e-9));
    // DP optimality: no enumerated path beats it.
    REQUIRE(track.total_score >= naive.score - 1e-9);
  }
}

TEST_CASE("stronger displacement penalties never increase total displacement") {
  Rng rng(31415);
  for (int trial = 0; trial < 20; ++trial) {
    const auto inst = random_instance(rng, 5, 3);
    // The penalized quantity: scale-normalized squared displacement sums
    // (the dx^2 and dy^2 features the quadratic weights act on).
    auto displacement_of = [&](const PartTrack& t) {
      double d = 0.0;
      for (std::size_t i = 1; i < t.chosen.size(); ++i) {
        const auto f = transition_feature(t.chosen[i - 1], t.chosen[i]);
        d += f[1] + f[3];
      }
      return d;
    };
    double prev = 1e18;
    for (const double q : {0.0, 0.05, 0.5, 5.0}) {
      const std::array<double, 6> theta{0, q, 0, q, 0, 0};
      const auto track = viterbi_link("p", inst, theta, 0.0);
      const double disp = displacement_of(track);
      CHECK(disp <= prev + 1e-9);
      prev = disp;
    }
  }
}

TEST_CASE("large lambda maximizes the overlap sum") {
  Rng rng(2718);
  for (int trial = 0; trial < 10; ++trial) {
    const auto inst = random_instance(rng, 4, 3);
    const std::array<double, 6> zero{0, 0, 0, 0, 0, 0};
    const auto track = viterbi_link("p", inst, zero, 1e7);
    // Oracle: enumerate, track max total overlap.
    double best_overlap = -1.0;
    std::vector<int> path(inst.size(), 0);
    while (true) {
      double ov = 0.0;
      for (std::size_t i = 1; i < inst.size(); ++i)
        ov += box_iou(inst[i - 1][static_cast<std::size_t>(path[i - 1])].box,
                      inst[i][static_cast<std::size_t>(path[i])].box);
      best_overlap = std::max(best_overlap, ov);
      std::size_t i = inst.size();
      bool done = false;
      while (i-- > 0) {
        if (++path[i] < static_cast<int>(inst[i].size())) break;
        path[i] = 0;
        if (i == 0) done = true;
      }
      if (done) break;
    }
    double got = 0.0;
    for (std::size_t i = 1; i < track.chosen.size(); ++i)
      got += box_iou(track.chosen[i - 1].box, track.chosen[i].box);
    CHECK(got == doctest::Approx(best_overlap).epsilon(1e-6));
  }
}

TEST_CASE("empty inputs are rejected") {
  CHECK_THROWS_AS(viterbi_link("p", {}, {0, 0, 0, 0, 0, 0}, 0.0), Error);
  std::vector<std::vector<TrackProposal>> missing(2);
  missing[0].push_back(proposal(0, 0, 0, 5, 5, 0.0));
  CHECK_THROWS_AS(viterbi_link("p", missing, {0, 0, 0, 0, 0, 0}, 0.0), Error);
}
