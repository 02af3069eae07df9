#include <cmath>
#include <limits>

#include "doctest.h"
#include "infer/detect.hpp"
#include "infer/dt.hpp"
#include "infer/frame_pass.hpp"
#include "infer/lbp.hpp"
#include "oracle/gen.hpp"
#include "oracle/naive.hpp"
#include "util/errors.hpp"

using namespace carfluents;

namespace {
constexpr double kNegInf = -std::numeric_limits<double>::infinity();

FlowPyramid zero_flow(const FeaturePyramid& pyr) {
  FlowGrid f0(pyr.levels[0].features.width(), pyr.levels[0].features.height());
  return flow_pyramid(f0, pyr);
}
}  // namespace

TEST_CASE("or over two terminals with a sentinel bias picks the live branch") {
  Rng rng(3);
  AOGraph g;
  g.feature_spec.channels.orientation_bins = 2;
  g.feature_spec.channels.intensity_channel = true;
  Node root;
  root.type = NodeType::or_node;
  root.id = 0;
  g.nodes.push_back(root);
  g.root = 0;
  for (int i = 0; i < 2; ++i) {
    Node t;
    t.type = NodeType::terminal;
    t.id = 1 + i;
    t.tw = t.th = 1;
    t.channels = 3;
    t.appearance = {0.4, -0.2, 0.7};
    t.deformation = {0.0, 0.5, 0.0, 0.5};
    g.nodes.push_back(t);
    g.node(0).children.push_back(t.id);
  }
  g.node(0).child_bias = {0.0, -1e18};
  const auto pyr = oracle::random_pyramid(rng, 6, 6, 3, 1);
  const auto pass = frame_pass(g, pyr);

  AOGraph single = g;
  single.node(0).children.pop_back();
  single.node(0).child_bias.pop_back();
  single.nodes.pop_back();
  const auto pass1 = frame_pass(single, pyr);
  const auto& m = pass.nodes[0][0].score;
  const auto& m1 = pass1.nodes[0][0].score;
  for (int y = 0; y < m.height(); ++y)
    for (int x = 0; x < m.width(); ++x) CHECK(m.at(x, y) == m1.at(x, y));
}

TEST_CASE("zero quadratic deformation weights are rejected") {
  Rng rng(9);
  AOGraph g = oracle::random_tree_graph(rng, oracle::TreeGraphOptions{});
  for (auto& n : g.nodes)
    if (n.is_terminal()) n.deformation = {0.0, 0.0, 0.0, 0.0};
  const auto pyr = oracle::random_pyramid(rng, 8, 8, 3, 2);
  CHECK_THROWS_AS(frame_pass(g, pyr), Error);
}

TEST_CASE("frame_pass equals exhaustive parse enumeration on random tree graphs") {
  Rng rng(424242);
  for (int trial = 0; trial < 30; ++trial) {
    const AOGraph g = oracle::random_tree_graph(rng, oracle::TreeGraphOptions{});
    const auto pyr = oracle::random_pyramid(rng, rng.uniform_int(4, 8), rng.uniform_int(4, 8), 3,
                                            2);
    const auto pass = frame_pass(g, pyr);
    const auto naive = oracle::naive_best_parse(g, pyr);

    double best = kNegInf;
    for (int l = 0; l < pyr.level_count(); ++l) {
      const auto& m = pass.nodes[static_cast<std::size_t>(l)][static_cast<std::size_t>(g.root)].score;
      for (int y = 0; y < m.height(); ++y)
        for (int x = 0; x < m.width(); ++x) best = std::max(best, m.at(x, y));
    }
    REQUIRE(best == naive.score);

    // Spot-check individual cells too.
    for (int k = 0; k < 5; ++k) {
      const int l = rng.next_int(pyr.level_count());
      const auto& m = pass.nodes[static_cast<std::size_t>(l)][static_cast<std::size_t>(g.root)].score;
      const Cell c{rng.next_int(m.width()), rng.next_int(m.height())};
      const double ours = m.at(c.x, c.y);
      const double ref = oracle::naive_cell_score(g, pyr, l, c);
      if (ours == kNegInf || ref == kNegInf)
        REQUIRE(ours == ref);
      else
        REQUIRE(ours == doctest::Approx(ref).epsilon(1e-12));
    }
  }
}

TEST_CASE("deformation penalty is maximal at the anchor and monotone outward") {
  Grid2D<double> resp(9, 1, 0.0);
  resp.at(4, 0) = 1.0;
  Grid2D<double> val;
  Grid2D<Cell> arg;
  dt_deform_to_query(resp, {0.0, 0.3, 0.0, 0.3}, 0, 9, 0, 1, &val, &arg);
  CHECK(val.at(4, 0) == 1.0);
  for (int x = 0; x < 4; ++x) CHECK(val.at(x, 0) <= val.at(x + 1, 0));
  for (int x = 5; x < 9; ++x) CHECK(val.at(x, 0) <= val.at(x - 1, 0));
}

TEST_CASE("retrieve_parse round-trips scores through the full pair pipeline") {
  Rng rng(90210);
  for (int trial = 0; trial < 12; ++trial) {
    const AOGraph g = oracle::random_coupled_graph(rng, 2, 2, 3);
    std::vector<FeaturePyramid> pyr;
    pyr.push_back(oracle::random_pyramid(rng, 8, 8, 3, 1));
    pyr.push_back(oracle::random_pyramid(rng, 8, 8, 3, 1));
    FlowGrid f0(8, 8);
    for (int y = 0; y < 8; ++y)
      for (int x = 0; x < 8; ++x)
        f0.at(x, y) = Vec2f{static_cast<float>(rng.uniform_int(-1, 1)),
                            static_cast<float>(rng.uniform_int(-1, 1))};
    const auto flow = flow_pyramid(f0, pyr[0]);
    const auto pass_i = frame_pass(g, pyr[0]);
    const auto pass_i1 = frame_pass(g, pyr[1]);
    const auto maps = st_window_score(g, pass_i, pass_i1, flow, LbpConfig{});
    const auto* root = maps.root_map(0);
    REQUIRE(root != nullptr);
    for (int k = 0; k < 10; ++k) {
      const Cell c{rng.next_int(root->width()), rng.next_int(root->height())};
      if (!(root->at(c.x, c.y) > kNegInf)) continue;
      ParseTree pt = retrieve_parse(maps, 0, c, 0);
      const double recomputed = score_parse_tree(g, pt, pyr[0], &flow);
      REQUIRE(recomputed ==
              doctest::Approx(root->at(c.x, c.y)).epsilon(1e-9));
      REQUIRE(pt.score == doctest::Approx(recomputed).epsilon(1e-9));
    }
  }
}

TEST_CASE("temporal_couple with zero weights is the identity on maps") {
  Rng rng(1999);
  AOGraph g = oracle::random_coupled_graph(rng, 2, 2, 3);
  for (auto& n : g.nodes) n.temporal_weight = 0.0;
  std::vector<FeaturePyramid> pyr;
  pyr.push_back(oracle::random_pyramid(rng, 8, 8, 3, 1));
  pyr.push_back(oracle::random_pyramid(rng, 8, 8, 3, 1));
  const auto flow = zero_flow(pyr[0]);
  const auto pass_i = frame_pass(g, pyr[0]);
  const auto pass_i1 = frame_pass(g, pyr[1]);
  const auto coupling = temporal_couple(g, pass_i, pass_i1, flow, LbpConfig{});
  REQUIRE(coupling.cars[0].count(1) == 1);
  const auto& coupled = coupling.cars[0].at(1);
  const auto& uncoupled = pass_i.nodes[0][1].score;
  for (int y = 0; y < uncoupled.height(); ++y)
    for (int x = 0; x < uncoupled.width(); ++x) {
      const double a = coupled.value.at(x, y);
      const double b = uncoupled.at(x, y);
      if (a == kNegInf || b == kNegInf)
        CHECK(a == b);
      else
        CHECK(a == doctest::Approx(b).epsilon(1e-12));
    }
}

TEST_CASE("a huge temporal weight pins both frames to the same cell") {
  Rng rng(555);
  std::vector<FlowGrid> storage;
  storage.reserve(2);
  LoopPotentials pot = oracle::random_loop(rng, 6, 1, false, &storage);
  pot.u_p1 = pot.u_p;      // identical frames
  pot.phi_r1 = pot.phi_r;
  pot.theta_r = 1e6;
  pot.theta_p = 1e6;
  const auto res = loop_lbp(pot, LbpConfig{});
  const auto best = loop_decode_best(pot, res);
  CHECK(best.r == best.r1);
  CHECK(best.p == best.p1);
  const auto naive = oracle::naive_loop_optimum(pot);
  CHECK(best.score == doctest::Approx(naive.score).epsilon(1e-9));
}

TEST_CASE("loop LBP decodes near the exhaustive joint optimum") {
  Rng rng(20250101);
  const int trials = 60;
  int within = 0;
  int exact = 0;
  for (int t = 0; t < trials; ++t) {
    std::vector<FlowGrid> storage;
    storage.reserve(2);
    LoopPotentials pot = oracle::random_loop(rng, 6, 1, t % 2 == 1, &storage);
    const auto res = loop_lbp(pot, LbpConfig{});
    const auto best = loop_decode_best(pot, res);
    const auto naive = oracle::naive_loop_optimum(pot);
    REQUIRE(best.score <= naive.score + 1e-9);
    const double gap = naive.score - best.score;
    if (gap <= 0.01 * std::abs(naive.score)) ++within;
    if (gap <= 1e-9) ++exact;
  }
  MESSAGE("exact fraction: " << static_cast<double>(exact) / trials);
  CHECK(within >= static_cast<int>(0.95 * trials));
}

TEST_CASE("greedy NMS keeps top-k and respects overlap suppression") {
  std::vector<ScoredBox> cands;
  cands.push_back({BoxF{0, 0, 10, 10}, 5.0, 0, {0, 0}});
  cands.push_back({BoxF{1, 1, 10, 10}, 4.0, 0, {1, 1}});   // heavy overlap, suppressed
  cands.push_back({BoxF{30, 30, 10, 10}, 3.0, 0, {3, 3}});
  const auto kept = greedy_nms(cands, 0.5, 5);
  REQUIRE(kept.size() == 2);
  CHECK(kept[0].score == 5.0);
  CHECK(kept[1].score == 3.0);
  const auto top1 = greedy_nms(cands, 0.5, 1);
  REQUIRE(top1.size() == 1);
  CHECK(top1[0].score == 5.0);
}

TEST_CASE("raising tau never adds detections (nested sets)") {
  Rng rng(8080);
  const AOGraph g = oracle::random_coupled_graph(rng, 1, 2, 3);
  std::vector<FeaturePyramid> pyr;
  pyr.push_back(oracle::random_pyramid(rng, 8, 8, 3, 1));
  pyr.push_back(oracle::random_pyramid(rng, 8, 8, 3, 1));
  const auto flow = zero_flow(pyr[0]);
  const auto pass_i = frame_pass(g, pyr[0]);
  const auto pass_i1 = frame_pass(g, pyr[1]);
  const auto maps = st_window_score(g, pass_i, pass_i1, flow, LbpConfig{});
  const auto loose = detect_pair(maps, -1e9, 0.5, 50, 0);
  const auto tight = detect_pair(maps, loose.empty() ? 0.0 : loose.front().score - 1e-9, 0.5, 50, 0);
  CHECK(tight.size() <= loose.size());
  for (const auto& d : tight) {
    bool found = false;
    for (const auto& l : loose)
      if (l.score == d.score) found = true;
    CHECK(found);
  }
  const auto none = detect_pair(maps, 1e18, 0.5, 50, 0);
  CHECK(none.empty());
}

TEST_CASE("or composition: dominated branch loses everywhere, argmap records it") {
  Rng rng(60);
  AOGraph g;
  g.feature_spec.channels.orientation_bins = 2;
  g.feature_spec.channels.intensity_channel = true;
  Node root;
  root.type = NodeType::or_node;
  root.id = 0;
  g.nodes.push_back(root);
  g.root = 0;
  for (int i = 0; i < 2; ++i) {
    Node t;
    t.type = NodeType::terminal;
    t.id = 1 + i;
    t.tw = t.th = 1;
    t.channels = 3;
    t.appearance = {0.3, 0.1, -0.2};  // identical templates
    t.deformation = {0.0, 0.4, 0.0, 0.4};
    g.nodes.push_back(t);
    g.node(0).children.push_back(t.id);
  }
  g.node(0).child_bias = {0.0, 1.0};  // branch 2 = branch 1 + 1 everywhere
  const auto pyr = oracle::random_pyramid(rng, 6, 6, 3, 1);
  const auto pass = frame_pass(g, pyr);
  const auto& root_map = pass.nodes[0][0];
  for (int y = 0; y < root_map.score.height(); ++y)
    for (int x = 0; x < root_map.score.width(); ++x) {
      CHECK(root_map.arg_child.at(x, y) == 1);
      const double branch1 = pass.child_contribution(1, 0, x, y);
      CHECK(root_map.score.at(x, y) == doctest::Approx(branch1 + 1.0).epsilon(1e-12));
    }
}

TEST_CASE("a two-frame video's graph score is the single pair score") {
  Rng rng(61);
  AOGraph g = oracle::random_coupled_graph(rng, 1, 2, 3);
  std::vector<FeaturePyramid> pyr{oracle::random_pyramid(rng, 8, 8, 3, 1),
                                  oracle::random_pyramid(rng, 8, 8, 3, 1)};
  std::vector<FlowPyramid> flows{zero_flow(pyr[0])};
  ParseGraph pg = oracle::random_parse_graph(rng, g, pyr, 1);
  const double video = score_parse_graph(g, pg, pyr, flows);
  ParseTree pt = pg.trees[0];
  const double pair = score_parse_tree(g, pt, pyr[0], &flows[0]);
  CHECK(video == pair);
}
