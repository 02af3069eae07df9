#include "oracle/gen.hpp"

#include <functional>

#include "util/errors.hpp"

namespace carfluents::oracle {

Grid2D<double> random_score_grid(Rng& rng, int w, int h, double lo, double hi) {
  Grid2D<double> g(w, h);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) g.at(x, y) = rng.uniform(lo, hi);
  return g;
}

FeatureGrid random_feature_grid(Rng& rng, int w, int h, int c) {
  FeatureGrid g(w, h, c);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x)
      for (int ch = 0; ch < c; ++ch) g.at(x, y, ch) = static_cast<float>(rng.uniform(-1.0, 1.0));
  return g;
}

FeaturePyramid random_pyramid(Rng& rng, int w, int h, int c, int levels) {
  FeaturePyramid pyr;
  pyr.cell_size = 4;
  pyr.interval = 1;
  pyr.channel_spec.orientation_bins = c - 1;
  pyr.channel_spec.intensity_channel = true;
  for (int k = 0; k < levels; ++k) {
    PyramidLevel level;
    level.scale = std::pow(2.0, -k);
    const int lw = std::max(1, w >> k);
    const int lh = std::max(1, h >> k);
    level.features = random_feature_grid(rng, lw, lh, c);
    pyr.levels.push_back(std::move(level));
  }
  return pyr;
}

namespace {

Node make_random_terminal(Rng& rng, int id, const TreeGraphOptions& opts) {
  Node t;
  t.type = NodeType::terminal;
  t.id = id;
  t.tw = rng.uniform_int(1, opts.max_template);
  t.th = rng.uniform_int(1, opts.max_template);
  t.channels = opts.channels;
  t.appearance.resize(static_cast<std::size_t>(t.tw) * t.th * t.channels);
  for (auto& w : t.appearance) w = rng.uniform(-1.0, 1.0);
  t.deformation = {rng.uniform(-0.3, 0.3), rng.uniform(0.2, 1.0), rng.uniform(-0.3, 0.3),
                   rng.uniform(0.2, 1.0)};
  t.scale_factor = opts.allow_sigma1 && rng.next_double() < 0.4 ? 1 : 0;
  t.anchor_x = rng.uniform_int(-1, 1);
  t.anchor_y = rng.uniform_int(-1, 1);
  return t;
}

}  // namespace

AOGraph random_tree_graph(Rng& rng, const TreeGraphOptions& opts) {
  AOGraph g;
  g.feature_spec.cell_size = 4;
  g.feature_spec.interval = 1;
  g.feature_spec.channels.orientation_bins = opts.channels - 1;
  g.feature_spec.channels.intensity_channel = true;

  Node root;
  root.type = NodeType::or_node;
  root.id = 0;
  root.tag = "root";
  g.nodes.push_back(root);
  g.root = 0;

  const int branches = rng.uniform_int(1, opts.max_branches);
  for (int b = 0; b < branches; ++b) {
    Node cfg;
    cfg.type = NodeType::and_node;
    cfg.id = g.node_count();
    cfg.bias = rng.uniform(-1.0, 1.0);
    const int cfg_id = cfg.id;
    g.nodes.push_back(cfg);
    g.node(0).children.push_back(cfg_id);
    g.node(0).child_bias.push_back(rng.uniform(-1.0, 1.0));
    const int parts = rng.uniform_int(1, opts.max_parts);
    for (int p = 0; p < parts; ++p) {
      Node t = make_random_terminal(rng, g.node_count(), opts);
      const int tid = t.id;
      g.nodes.push_back(std::move(t));
      g.node(cfg_id).children.push_back(tid);
    }
  }
  return g;
}

AOGraph random_coupled_graph(Rng& rng, int parts, int branches_per_part, int channels) {
  AOGraph g;
  g.feature_spec.cell_size = 4;
  g.feature_spec.interval = 1;
  g.feature_spec.channels.orientation_bins = channels - 1;
  g.feature_spec.channels.intensity_channel = true;

  Node root;
  root.type = NodeType::or_node;
  root.id = 0;
  root.tag = "root";
  g.nodes.push_back(root);
  g.root = 0;

  Node car;
  car.type = NodeType::and_node;
  car.id = 1;
  car.tag = "car";
  car.bias = rng.uniform(-0.5, 0.5);
  car.temporal = true;
  car.temporal_weight = rng.uniform(0.05, 0.6);
  car.view_id = 0;
  car.type_id = 0;
  g.nodes.push_back(car);
  g.node(0).children.push_back(1);
  g.node(0).child_bias.push_back(rng.uniform(-0.5, 0.5));

  TreeGraphOptions topts;
  topts.channels = channels;
  topts.allow_sigma1 = false;
  topts.max_template = 2;

  Node body = make_random_terminal(rng, g.node_count(), topts);
  body.is_body = true;
  body.scale_factor = 0;
  const int body_id = body.id;
  g.nodes.push_back(std::move(body));
  g.node(1).children.push_back(body_id);

  for (int p = 0; p < parts; ++p) {
    Node part;
    part.type = NodeType::or_node;
    part.id = g.node_count();
    part.tag = "part:p" + std::to_string(p);
    part.part_name = "p" + std::to_string(p);
    part.part_kind = PartKind::panel;
    part.temporal = true;
    part.temporal_weight = rng.uniform(0.05, 0.6);
    const int part_id = part.id;
    g.nodes.push_back(std::move(part));
    g.node(1).children.push_back(part_id);
    for (int b = 0; b < branches_per_part; ++b) {
      Node t = make_random_terminal(rng, g.node_count(), topts);
      t.scale_factor = 0;
      t.status_index = b % 3;
      const int tid = t.id;
      g.nodes.push_back(std::move(t));
      g.node(part_id).children.push_back(tid);
      g.node(part_id).child_bias.push_back(rng.uniform(-0.5, 0.5));
    }
  }
  return g;
}

ParseGraph random_parse_graph(Rng& rng, const AOGraph& g,
                              const std::vector<FeaturePyramid>& pyramids, int pairs) {
  ParseGraph pg;
  for (int pair = 0; pair < pairs; ++pair) {
    const FeaturePyramid& pyr = pyramids[static_cast<std::size_t>(pair)];
    // Levels where every terminal has a feasible placement level.
    std::vector<int> ok_levels;
    for (int l = 0; l < pyr.level_count(); ++l) {
      bool ok = true;
      for (const auto& n : g.nodes) {
        if (!n.is_terminal()) continue;
        const int tl = l - n.scale_factor * g.feature_spec.interval;
        if (tl < 0 || tl >= pyr.level_count()) {
          ok = false;
          break;
        }
        const auto& grid = pyr.levels[static_cast<std::size_t>(tl)].features;
        if (n.tw > grid.width() || n.th > grid.height()) {
          ok = false;
          break;
        }
      }
      if (ok) ok_levels.push_back(l);
    }
    if (ok_levels.empty()) fail_invalid("random_parse_graph: no feasible level");
    const int level = ok_levels[static_cast<std::size_t>(rng.next_int(
        static_cast<int>(ok_levels.size())))];
    const auto& ref = pyr.levels[static_cast<std::size_t>(level)].features;

    ParseTree pt;
    pt.pair_index = pair;
    const Cell root_cell{rng.next_int(ref.width()), rng.next_int(ref.height())};

    std::function<void(int, int, Cell)> walk = [&](int node_id, int lvl, Cell cell) {
      const Node& n = g.node(node_id);
      if (n.is_terminal()) {
        const int tl = lvl - n.scale_factor * g.feature_spec.interval;
        const auto& grid = pyr.levels[static_cast<std::size_t>(tl)].features;
        const Cell tc{rng.next_int(grid.width() - n.tw + 1),
                      rng.next_int(grid.height() - n.th + 1)};
        pt.placed.push_back({node_id, tl, tc, -1});
        if (n.temporal)
          pt.next_linked.push_back(
              {node_id, tl,
               Cell{rng.next_int(grid.width() - n.tw + 1), rng.next_int(grid.height() - n.th + 1)},
               -1});
        return;
      }
      PlacedNode placed{node_id, lvl, cell, -1};
      if (n.is_or()) {
        placed.chosen_child = rng.next_int(static_cast<int>(n.children.size()));
        pt.placed.push_back(placed);
        const std::size_t before = pt.placed.size();
        walk(n.children[static_cast<std::size_t>(placed.chosen_child)], lvl, cell);
        if (n.temporal) {
          // Part position follows the first terminal in the branch.
          PlacedNode pos = placed;
          for (std::size_t k = before; k < pt.placed.size(); ++k)
            if (g.node(pt.placed[k].node_id).is_terminal()) {
              pos = pt.placed[k];
              break;
            }
          const auto& grid = pyr.levels[static_cast<std::size_t>(pos.level)].features;
          pt.next_linked.push_back(
              {node_id, pos.level,
               Cell{rng.next_int(grid.width()), rng.next_int(grid.height())}, -1});
        }
        return;
      }
      pt.placed.push_back(placed);
      for (int child : n.children) walk(child, lvl, cell);
      if (n.temporal)
        pt.next_linked.push_back(
            {node_id, lvl, Cell{rng.next_int(ref.width()), rng.next_int(ref.height())}, -1});
    };
    walk(g.root, level, root_cell);
    pg.trees.push_back(std::move(pt));
  }
  return pg;
}

LoopPotentials random_loop(Rng& rng, int grid, int branches, bool with_flow,
                           std::vector<FlowGrid>* flow_storage) {
  LoopPotentials pot;
  pot.phi_r = random_score_grid(rng, grid, grid);
  pot.phi_r1 = random_score_grid(rng, grid, grid);
  for (int b = 0; b < branches; ++b) {
    pot.u_p.push_back(random_score_grid(rng, grid, grid));
    pot.u_p1.push_back(random_score_grid(rng, grid, grid));
    pot.def.push_back({rng.uniform(-0.2, 0.2), rng.uniform(0.05, 0.8), rng.uniform(-0.2, 0.2),
                       rng.uniform(0.05, 0.8)});
    pot.anchor.push_back(Cell{rng.uniform_int(-1, 1), rng.uniform_int(-1, 1)});
  }
  pot.scale = 1;
  pot.theta_r = rng.uniform(0.001, 1.0);
  pot.theta_p = rng.uniform(0.001, 1.0);
  if (with_flow && flow_storage) {
    FlowGrid fr(grid, grid), fp(grid, grid);
    for (int y = 0; y < grid; ++y)
      for (int x = 0; x < grid; ++x) {
        fr.at(x, y) = Vec2f{static_cast<float>(rng.uniform_int(-1, 1)),
                            static_cast<float>(rng.uniform_int(-1, 1))};
        fp.at(x, y) = Vec2f{static_cast<float>(rng.uniform_int(-1, 1)),
                            static_cast<float>(rng.uniform_int(-1, 1))};
      }
    flow_storage->push_back(std::move(fr));
    flow_storage->push_back(std::move(fp));
    pot.flow_r = &(*flow_storage)[flow_storage->size() - 2];
    pot.flow_p = &(*flow_storage)[flow_storage->size() - 1];
  }
  return pot;
}

}  // namespace carfluents::oracle
