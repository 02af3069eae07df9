#include <cmath>

#include "data/synth.hpp"
#include "doctest.h"
#include "fluent/classify.hpp"
#include "fluent/kmeans.hpp"
#include "fluent/pca.hpp"
#include "fluent/tps.hpp"
#include "fluent/vlad.hpp"
#include "oracle/naive.hpp"
#include "util/errors.hpp"
#include "util/rng.hpp"

using namespace carfluents;

TEST_CASE("kmeans hits zero inertia with k = distinct points and splits blobs") {
  std::vector<std::vector<double>> pts{{0.50}, {0.52}, {2.0}, {2.1}};
  const auto km = kmeans(pts, 2, 7);
  CHECK(km.assignment[0] == km.assignment[1]);
  CHECK(km.assignment[2] == km.assignment[3]);
  CHECK(km.assignment[0] != km.assignment[2]);
  CHECK(elbow_k(pts, 3, 7) >= 2);

  const auto exact = kmeans(pts, 4, 7);
  CHECK(exact.inertia == doctest::Approx(0.0));

  CHECK_THROWS_AS(kmeans(pts, 5, 7), Error);
}

TEST_CASE("pca with full dimension is a rotation preserving distances") {
  Rng rng(1212);
  std::vector<std::vector<double>> pts;
  for (int i = 0; i < 40; ++i)
    pts.push_back({rng.uniform(-2, 2), rng.uniform(-1, 1), rng.uniform(0, 3)});
  const auto pca = fit_pca(pts, 3);
  // Orthonormal within 1e-8.
  for (std::size_t a = 0; a < 3; ++a)
    for (std::size_t b = 0; b < 3; ++b) {
      double dot = 0.0;
      for (std::size_t i = 0; i < 3; ++i) dot += pca.basis[a][i] * pca.basis[b][i];
      CHECK(dot == doctest::Approx(a == b ? 1.0 : 0.0).epsilon(1e-8));
    }
  for (int t = 0; t < 10; ++t) {
    const auto& x = pts[static_cast<std::size_t>(t)];
    const auto& y = pts[static_cast<std::size_t>(t + 10)];
    const auto px = pca.project(x);
    const auto py = pca.project(y);
    double d0 = 0.0, d1 = 0.0;
    for (std::size_t i = 0; i < 3; ++i) {
      d0 += (x[i] - y[i]) * (x[i] - y[i]);
      d1 += (px[i] - py[i]) * (px[i] - py[i]);
    }
    CHECK(std::sqrt(d0) == doctest::Approx(std::sqrt(d1)).epsilon(1e-8));
  }
}

TEST_CASE("vlad basics: centroid hits give zero, single residual normalizes") {
  Codebook cb;
  cb.centroids = {{1.0, 2.0}, {-1.0, 0.5}};
  const auto zero = vlad_encode({{1.0, 2.0}, {-1.0, 0.5}}, cb);
  for (const double v : zero) CHECK(v == 0.0);

  Codebook one;
  one.centroids = {{0.0, 0.0}};
  const auto enc = vlad_encode({{3.0, -4.0}}, one);
  // signed sqrt of (3, -4) then L2: (sqrt3, -2)/norm
  const double n = std::sqrt(3.0 + 4.0);
  CHECK(enc[0] == doctest::Approx(std::sqrt(3.0) / n));
  CHECK(enc[1] == doctest::Approx(-2.0 / n));
  double norm = 0.0;
  for (const double v : enc) norm += v * v;
  CHECK(norm == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("vlad equals the naive accumulation oracle") {
  Rng rng(4242);
  for (int trial = 0; trial < 30; ++trial) {
    const int k = rng.uniform_int(1, 4);
    const int d = rng.uniform_int(2, 5);
    Codebook cb;
    for (int c = 0; c < k; ++c) {
      std::vector<double> centroid;
      for (int i = 0; i < d; ++i) centroid.push_back(rng.uniform(-2, 2));
      cb.centroids.push_back(std::move(centroid));
    }
    std::vector<std::vector<double>> locals;
    const int n = rng.uniform_int(1, 20);
    for (int i = 0; i < n; ++i) {
      std::vector<double> x;
      for (int j = 0; j < d; ++j) x.push_back(rng.uniform(-3, 3));
      locals.push_back(std::move(x));
    }
    const auto raw = vlad_encode_raw(locals, cb);
    const auto naive = oracle::naive_vlad_raw(locals, cb.centroids);
    REQUIRE(raw.size() == naive.size());
    for (std::size_t i = 0; i < raw.size(); ++i) REQUIRE(raw[i] == naive[i]);

    // Normalized within 1e-12 of normalizing the oracle output.
    auto normed = naive;
    double norm2 = 0.0;
    for (auto& v : normed) {
      v = (v >= 0.0 ? 1.0 : -1.0) * std::sqrt(std::abs(v));
      norm2 += v * v;
    }
    if (norm2 > 0.0)
      for (auto& v : normed) v /= std::sqrt(norm2);
    const auto enc = vlad_encode(locals, cb);
    for (std::size_t i = 0; i < enc.size(); ++i)
      REQUIRE(enc[i] == doctest::Approx(normed[i]).epsilon(1e-12));
  }
}

TEST_CASE("vlad translation covariance on integer data is exact") {
  Codebook cb;
  cb.centroids = {{1.0, 2.0}, {4.0, -1.0}};
  std::vector<std::vector<double>> locals{{0.0, 3.0}, {5.0, -2.0}, {2.0, 2.0}};
  const auto base = vlad_encode(locals, cb);
  Codebook shifted_cb;
  for (const auto& c : cb.centroids) shifted_cb.centroids.push_back({c[0] + 7.0, c[1] - 3.0});
  std::vector<std::vector<double>> shifted;
  for (const auto& x : locals) shifted.push_back({x[0] + 7.0, x[1] - 3.0});
  const auto moved = vlad_encode(shifted, shifted_cb);
  REQUIRE(base.size() == moved.size());
  for (std::size_t i = 0; i < base.size(); ++i) CHECK(base[i] == moved[i]);
}

TEST_CASE("codebook training recovers well-separated blobs") {
  Rng rng(808);
  std::vector<std::vector<double>> locals;
  for (int i = 0; i < 30; ++i)
    locals.push_back({10.0 + rng.uniform(-0.5, 0.5), rng.uniform(-0.5, 0.5)});
  for (int i = 0; i < 30; ++i)
    locals.push_back({-10.0 + rng.uniform(-0.5, 0.5), rng.uniform(-0.5, 0.5)});
  const auto cb = train_codebook(locals, 2, 0, 5);
  REQUIRE(cb.centroids.size() == 2);
  const double a = cb.centroids[0][0];
  const double b = cb.centroids[1][0];
  CHECK(std::abs(std::abs(a) - 10.0) < 1.0);
  CHECK(std::abs(std::abs(b) - 10.0) < 1.0);
  CHECK(a * b < 0);  // opposite blobs
}

TEST_CASE("one-vs-rest classifier separates separable descriptors") {
  std::vector<std::vector<double>> xs;
  std::vector<int> ys;
  Rng rng(11);
  for (int i = 0; i < 20; ++i) {
    xs.push_back({rng.uniform(1.0, 2.0)});
    ys.push_back(0);
    xs.push_back({rng.uniform(-2.0, -1.0)});
    ys.push_back(1);
  }
  const auto model = train_fluent(xs, ys, {"a", "b"}, 10.0, 7);
  int correct = 0;
  for (std::size_t i = 0; i < xs.size(); ++i)
    if (classify(model, xs[i]).first == ys[i]) ++correct;
  CHECK(correct == static_cast<int>(xs.size()));

  // Determinism.
  const auto model2 = train_fluent(xs, ys, {"a", "b"}, 10.0, 7);
  CHECK(model.weights == model2.weights);
  CHECK(model.bias == model2.bias);

  // Zero-weight model ties to class 0.
  FluentModel zero;
  zero.labels = {"a", "b"};
  zero.weights = {{0.0}, {0.0}};
  zero.bias = {0.0, 0.0};
  CHECK(classify(zero, {0.0}).first == 0);

  // Permuting the class order permutes the scores consistently; the argmax
  // label is invariant.
  std::vector<int> permuted;
  for (const int y : ys) permuted.push_back(1 - y);
  const auto swapped = train_fluent(xs, permuted, {"b", "a"}, 10.0, 7);
  for (std::size_t i = 0; i < xs.size(); ++i) {
    const auto [p0, s0] = classify(model, xs[i]);
    const auto [p1, s1] = classify(swapped, xs[i]);
    CHECK(model.labels[static_cast<std::size_t>(p0)] ==
          swapped.labels[static_cast<std::size_t>(p1)]);
    CHECK(s0[0] == doctest::Approx(s1[1]).epsilon(1e-9));
    CHECK(s0[1] == doctest::Approx(s1[0]).epsilon(1e-9));
  }

  CHECK_THROWS_AS(train_fluent(xs, std::vector<int>(xs.size(), 0), {"a", "b"}, 1.0, 7), Error);
}

TEST_CASE("confusion matrix and mean precision") {
  const auto perfect = confusion_and_mp({0, 1, 2}, {0, 1, 2}, 3);
  CHECK(perfect.mean_precision == doctest::Approx(1.0));
  for (int t = 0; t < 3; ++t)
    for (int p = 0; p < 3; ++p)
      CHECK(perfect.matrix.at(p, t) == (p == t ? 1.0 : 0.0));

  const auto half = confusion_and_mp({0, 0, 0, 0}, {0, 0, 1, 1}, 2);
  CHECK(half.mean_precision == doctest::Approx(0.5));

  CHECK_THROWS_AS(confusion_and_mp({5}, {0}, 2), Error);
}

TEST_CASE("TPS descriptors: one-hot blocks, displacement, light intensity") {
  // Two parts: a panel with z=3 and a light with z=3.
  PartTrack door;
  door.part = "door";
  door.chosen.push_back(TrackProposal{0, BoxF{10, 10, 10, 10}, kStatusClose, 0.0});
  door.chosen.push_back(TrackProposal{3, BoxF{10, 10, 10, 10}, kStatusClose, 0.0});
  PartTrack light;
  light.part = "left_light";
  light.chosen.push_back(TrackProposal{0, BoxF{2, 20, 8, 7}, kStatusOpen, 0.0});
  light.chosen.push_back(TrackProposal{3, BoxF{2, 20, 8, 7}, kStatusClose, 0.0});

  // Frames: light box bright at frame 0, dark at frame 3.
  std::vector<Frame> frames(4);
  for (auto& f : frames) f.intensity = Grid2D<float>(64, 48, 0.5f);
  for (int y = 20; y < 27; ++y)
    for (int x = 2; x < 10; ++x) {
      frames[0].intensity.at(x, y) = 0.9f;
      frames[3].intensity.at(x, y) = 0.1f;
    }

  const std::vector<PartKind> kinds{PartKind::panel, PartKind::light};
  const std::vector<int> zs{3, 3};
  const auto locals = extract_tps({door, light}, kinds, zs, frames);
  REQUIRE(locals.size() == 1);
  const auto& v = locals[0];
  REQUIRE(static_cast<int>(v.size()) == tps_local_dim(kinds, zs));

  // Door: phi1 = (0,1,0) (close), phi2 one-hot at 1*3+1 = 4, d = 0.
  CHECK(v[0] == 0.0);
  CHECK(v[1] == 1.0);
  CHECK(v[2] == 0.0);
  for (int i = 0; i < 9; ++i) CHECK(v[3 + i] == (i == 4 ? 1.0 : 0.0));
  CHECK(v[12] == 0.0);
  CHECK(v[13] == 0.0);
  // Light: phi1 = (1,0,0) (on), transition on->off at index 0*3+1 = 1.
  CHECK(v[14] == 1.0);
  for (int i = 0; i < 9; ++i) CHECK(v[17 + i] == (i == 1 ? 1.0 : 0.0));
  // Appended light intensity difference: 0.1 - 0.9 = -0.8.
  CHECK(v.back() == doctest::Approx(-0.8).epsilon(1e-6));

  // One-hot integrity on every block.
  double phi1_sum = v[0] + v[1] + v[2];
  CHECK(phi1_sum == 1.0);
}

TEST_CASE("concat_descriptors handles zero blocks and norms") {
  const std::vector<double> a{1.0, 0.0};
  const std::vector<double> b{0.0, 0.0, 0.0};
  const auto merged = concat_descriptors(a, b, true);
  double norm = 0.0;
  for (const double v : merged) norm += v * v;
  CHECK(norm == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(merged[0] == doctest::Approx(1.0));

  const std::vector<double> ua{1.0, 0.0};
  const std::vector<double> ub{0.0, 1.0};
  const auto plain = concat_descriptors(ua, ub, false);
  double n2 = 0.0;
  for (const double v : plain) n2 += v * v;
  CHECK(std::sqrt(n2) == doctest::Approx(std::sqrt(2.0)));
}

TEST_CASE("fused side-features help when they carry the label") {
  Rng rng(31);
  // TPS-like part is uninformative; the side feature separates the classes.
  std::vector<std::vector<double>> tps_only, fused;
  std::vector<int> labels;
  for (int i = 0; i < 40; ++i) {
    const int y = i % 2;
    std::vector<double> tps{rng.uniform(-1, 1)};
    std::vector<double> side{y == 0 ? rng.uniform(0.5, 1.0) : rng.uniform(-1.0, -0.5)};
    tps_only.push_back(tps);
    fused.push_back(concat_descriptors(tps, side, true));
    labels.push_back(y);
  }
  const auto weak = train_fluent(tps_only, labels, {"a", "b"}, 10.0, 7);
  const auto strong = train_fluent(fused, labels, {"a", "b"}, 10.0, 7);
  int weak_ok = 0, strong_ok = 0;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    weak_ok += classify(weak, tps_only[i]).first == labels[i];
    strong_ok += classify(strong, fused[i]).first == labels[i];
  }
  CHECK(strong_ok > weak_ok);
  CHECK(strong_ok == static_cast<int>(labels.size()));
}
