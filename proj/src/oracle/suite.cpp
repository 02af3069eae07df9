#include "oracle/suite.hpp"

#include <chrono>
#include <cmath>
#include <fstream>
#include <limits>

#include "fluent/vlad.hpp"
#include "infer/detect.hpp"
#include "infer/dt.hpp"
#include "infer/frame_pass.hpp"
#include "oracle/gen.hpp"
#include "oracle/naive.hpp"
#include "track/viterbi.hpp"
#include "util/errors.hpp"

namespace carfluents::oracle {

namespace {

constexpr double kNegInf = -std::numeric_limits<double>::infinity();

class Timer {
 public:
  Timer() : start_(std::chrono::steady_clock::now()) {}
  double millis() const {
    return std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - start_)
        .count();
  }

 private:
  std::chrono::steady_clock::time_point start_;
};

SuiteRow check_distance_transform(std::uint64_t seed) {
  SuiteRow row;
  row.name = "distance_transform";
  row.cases = 200;
  Timer timer;
  Rng rng(seed);
  for (int t = 0; t < row.cases; ++t) {
    const int w = rng.uniform_int(1, 32);
    const int h = rng.uniform_int(1, 32);
    Grid2D<double> in = random_score_grid(rng, w, h, -10.0, 10.0);
    if (t % 5 == 0)
      for (int k = 0; k < w * h / 6; ++k) in.at(rng.next_int(w), rng.next_int(h)) = kNegInf;
    const std::array<double, 4> weights{rng.uniform(-1.0, 1.0), rng.uniform(0.01, 2.0),
                                        rng.uniform(-1.0, 1.0), rng.uniform(0.01, 2.0)};
    const auto fast = distance_transform(in, weights);
    const auto slow = naive_distance_transform(in, weights);
    bool ok = true;
    for (int y = 0; y < h && ok; ++y) {
      for (int x = 0; x < w && ok; ++x) {
        if (fast.value.at(x, y) != slow.value.at(x, y)) ok = false;
        const Cell a = fast.arg.at(x, y);
        if (a.x >= 0) {
          const double dx = static_cast<double>(x - a.x);
          const double dy = static_cast<double>(y - a.y);
          double v = in.at(a.x, a.y) - weights[0] * dx - weights[1] * (dx * dx);
          v = v - weights[2] * dy - weights[3] * (dy * dy);
          if (v != fast.value.at(x, y)) ok = false;
        } else if (fast.value.at(x, y) != kNegInf) {
          ok = false;
        }
        if (!ok && fast.value.at(x, y) > kNegInf && slow.value.at(x, y) > kNegInf)
          row.max_err = std::max(row.max_err,
                                 std::abs(fast.value.at(x, y) - slow.value.at(x, y)));
      }
    }
    if (ok) ++row.passed;
  }
  row.millis = timer.millis();
  row.ok = row.passed == row.cases;
  return row;
}

SuiteRow check_tree_inference(std::uint64_t seed) {
  SuiteRow row;
  row.name = "tree_inference";
  row.cases = 100;
  Timer timer;
  Rng rng(seed + 1);
  for (int t = 0; t < row.cases; ++t) {
    const AOGraph g = random_tree_graph(rng, TreeGraphOptions{});
    const auto pyr = random_pyramid(rng, rng.uniform_int(4, 8), rng.uniform_int(4, 8), 3, 2);
    std::vector<FeaturePyramid> pyrs{pyr, pyr};
    const FramePass pass_i = frame_pass(g, pyrs[0]);
    const FramePass pass_i1 = frame_pass(g, pyrs[1]);
    FlowGrid zero(pyr.levels[0].features.width(), pyr.levels[0].features.height());
    const FlowPyramid flow = flow_pyramid(zero, pyr);
    const PairMaps maps = st_window_score(g, pass_i, pass_i1, flow, LbpConfig{});
    const auto dets = detect_pair(maps, -1e15, 0.5, 1, 0);
    const auto naive = naive_best_parse(g, pyr);
    const double got = dets.empty() ? kNegInf : dets.front().score;
    if (got == naive.score) {
      ++row.passed;
    } else {
      row.max_err = std::max(row.max_err, std::abs(got - naive.score));
    }
  }
  row.millis = timer.millis();
  row.ok = row.passed == row.cases;
  return row;
}

SuiteRow check_lbp_loop(std::uint64_t seed) {
  SuiteRow row;
  row.name = "lbp_loop";
  row.cases = 200;
  Timer timer;
  Rng rng(seed + 2);
  int exact = 0;
  for (int t = 0; t < row.cases; ++t) {
    std::vector<FlowGrid> storage;
    storage.reserve(2);
    LoopPotentials pot = random_loop(rng, 6, 1, t % 2 == 1, &storage);
    const LoopResult res = loop_lbp(pot, LbpConfig{});
    const LoopAssignment best = loop_decode_best(pot, res);
    const NaiveLoopOpt naive = naive_loop_optimum(pot);
    const double gap = naive.score - best.score;
    row.max_err = std::max(row.max_err, gap);
    if (gap <= 0.01 * std::abs(naive.score) + 1e-12) ++row.passed;
    if (gap <= 1e-9) ++exact;
  }
  row.millis = timer.millis();
  row.ok = row.passed >= static_cast<int>(std::ceil(0.95 * row.cases));
  row.note = "exact_fraction=" + std::to_string(static_cast<double>(exact) / row.cases);
  return row;
}

SuiteRow check_viterbi(std::uint64_t seed) {
  SuiteRow row;
  row.name = "viterbi_linking";
  row.cases = 500;
  Timer timer;
  Rng rng(seed + 3);
  for (int t = 0; t < row.cases; ++t) {
    const int frames = rng.uniform_int(2, 6);
    const int k = rng.uniform_int(1, 4);
    std::vector<std::vector<TrackProposal>> inst(static_cast<std::size_t>(frames));
    for (int i = 0; i < frames; ++i)
      for (int j = 0; j < k; ++j)
        inst[static_cast<std::size_t>(i)].push_back(
            TrackProposal{i,
                          BoxF{rng.uniform(0, 40), rng.uniform(0, 40), rng.uniform(4, 16),
                               rng.uniform(4, 16)},
                          rng.next_int(3), rng.uniform(-2, 2)});
    const std::array<double, 6> theta{rng.uniform(-0.5, 0.5), rng.uniform(0, 0.5),
                                      rng.uniform(-0.5, 0.5), rng.uniform(0, 0.5),
                                      rng.uniform(-0.5, 0.5), rng.uniform(0, 0.5)};
    const double lambda = rng.uniform(0, 2);
    const auto track = viterbi_link("p", inst, theta, lambda);
    const auto naive = naive_best_path(inst, theta, lambda);
    const double err = std::abs(track.total_score - naive.score);
    row.max_err = std::max(row.max_err, err);
    if (err <= 1e-9 * (1.0 + std::abs(naive.score))) ++row.passed;
  }
  row.millis = timer.millis();
  row.ok = row.passed == row.cases;
  return row;
}

SuiteRow check_duality(std::uint64_t seed) {
  SuiteRow row;
  row.name = "score_feature_duality";
  row.cases = 100;
  Timer timer;
  Rng rng(seed + 4);
  for (int t = 0; t < row.cases; ++t) {
    AOGraph g = (t % 2 == 0) ? random_tree_graph(rng, TreeGraphOptions{})
                             : random_coupled_graph(rng, 2, 2, 3);
    const int pairs = rng.uniform_int(1, 3);
    std::vector<FeaturePyramid> pyramids;
    std::vector<FlowPyramid> flows;
    for (int i = 0; i < pairs; ++i) {
      pyramids.push_back(random_pyramid(rng, 10, 8, 3, 2));
      FlowGrid f0(10, 8);
      for (int y = 0; y < 8; ++y)
        for (int x = 0; x < 10; ++x)
          f0.at(x, y) = Vec2f{static_cast<float>(rng.uniform(-1.5, 1.5)),
                              static_cast<float>(rng.uniform(-1.5, 1.5))};
      flows.push_back(flow_pyramid(f0, pyramids.back()));
    }
    ParseGraph pg = random_parse_graph(rng, g, pyramids, pairs);
    const double recursive = score_parse_graph(g, pg, pyramids, flows);
    const auto theta = pack_weights(g);
    const auto phi = joint_feature(g, pg, pyramids, flows);
    double dot = 0.0;
    for (std::size_t i = 0; i < theta.size(); ++i) dot += theta[i] * phi[i];
    const double err = std::abs(dot - recursive) / (1.0 + std::abs(recursive));
    row.max_err = std::max(row.max_err, err);
    if (err <= 1e-9) ++row.passed;
  }
  row.millis = timer.millis();
  row.ok = row.passed == row.cases;
  return row;
}

SuiteRow check_vlad(std::uint64_t seed) {
  SuiteRow row;
  row.name = "vlad_encoding";
  row.cases = 100;
  Timer timer;
  Rng rng(seed + 5);
  for (int t = 0; t < row.cases; ++t) {
    const int k = rng.uniform_int(1, 5);
    const int d = rng.uniform_int(2, 6);
    Codebook cb;
    for (int c = 0; c < k; ++c) {
      std::vector<double> centroid;
      for (int i = 0; i < d; ++i) centroid.push_back(rng.uniform(-2, 2));
      cb.centroids.push_back(std::move(centroid));
    }
    std::vector<std::vector<double>> locals;
    const int n = rng.uniform_int(1, 25);
    for (int i = 0; i < n; ++i) {
      std::vector<double> x;
      for (int j = 0; j < d; ++j) x.push_back(rng.uniform(-3, 3));
      locals.push_back(std::move(x));
    }
    const auto raw = vlad_encode_raw(locals, cb);
    const auto naive = naive_vlad_raw(locals, cb.centroids);
    bool ok = raw.size() == naive.size();
    for (std::size_t i = 0; ok && i < raw.size(); ++i)
      if (raw[i] != naive[i]) ok = false;
    auto normed = naive;
    double norm2 = 0.0;
    for (auto& v : normed) {
      v = (v >= 0.0 ? 1.0 : -1.0) * std::sqrt(std::abs(v));
      norm2 += v * v;
    }
    if (norm2 > 0.0)
      for (auto& v : normed) v /= std::sqrt(norm2);
    const auto enc = vlad_encode(locals, cb);
    for (std::size_t i = 0; ok && i < enc.size(); ++i) {
      const double err = std::abs(enc[i] - normed[i]);
      row.max_err = std::max(row.max_err, err);
      if (err > 1e-12) ok = false;
    }
    if (ok) ++row.passed;
  }
  row.millis = timer.millis();
  row.ok = row.passed == row.cases;
  return row;
}

}  // namespace

std::vector<SuiteRow> run_oracle_suite(std::uint64_t seed) {
  std::vector<SuiteRow> rows;
  rows.push_back(check_distance_transform(seed));
  rows.push_back(check_tree_inference(seed));
  rows.push_back(check_lbp_loop(seed));
  rows.push_back(check_viterbi(seed));
  rows.push_back(check_duality(seed));
  rows.push_back(check_vlad(seed));
  return rows;
}

void write_suite_csv(const std::vector<SuiteRow>& rows, const std::string& path) {
  // No timing column: reruns with the same seed must be byte-identical.
  std::ofstream out(path);
  if (!out) fail_io("cannot write " + path);
  out << "check,cases,passed,max_err,status,note\n";
  for (const auto& r : rows) {
    out << r.name << "," << r.cases << "," << r.passed << "," << r.max_err << ","
        << (r.ok ? "pass" : "fail") << "," << r.note << "\n";
  }
}

bool suite_all_passed(const std::vector<SuiteRow>& rows) {
  for (const auto& r : rows)
    if (!r.ok) return false;
  return true;
}

}  // namespace carfluents::oracle
