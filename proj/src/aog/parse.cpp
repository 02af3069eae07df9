#include "aog/parse.hpp"

#include <cmath>
#include <functional>
#include <unordered_map>

#include "util/errors.hpp"

namespace carfluents {

BoxF terminal_box(const AOGraph& g, int terminal_id, const FeaturePyramid& pyr, int level,
                  Cell cell) {
  const Node& t = g.node(terminal_id);
  const double ppc = pyr.pixels_per_cell(level);
  return BoxF{cell.x * ppc, cell.y * ppc, t.tw * ppc, t.th * ppc};
}

namespace {

// Walks a recorded parse in lockstep with the graph structure. Each node
// instance consumes one `placed` entry in depth-first order.
struct ParseWalker {
  ParseWalker(const AOGraph& graph, const ParseTree& tree, const FeaturePyramid& pyramid)
      : g(graph), pt(tree), pyr(pyramid) {}

  const AOGraph& g;
  const ParseTree& pt;
  const FeaturePyramid& pyr;
  std::size_t cursor = 0;

  struct Subtree {
    double score = 0.0;
    bool has_terminal = false;
    int terminal_id = -1;
    int level = 0;
    Cell cell;
  };

  std::vector<PlacedNode> linked;              // frame-i positions of E_M nodes
  std::vector<PartObservation>* parts = nullptr;
  BoxF* car_box = nullptr;
  int* view_id = nullptr;
  int* type_id = nullptr;

  const PlacedNode& take(int expect_id) {
    if (cursor >= pt.placed.size()) fail_invalid("parse walk: placement list too short");
    const PlacedNode& p = pt.placed[cursor++];
    if (p.node_id != expect_id)
      fail_invalid("parse walk: expected node " + std::to_string(expect_id) + ", found " +
                   std::to_string(p.node_id));
    return p;
  }

  Subtree walk(int node_id) {
    const Node& n = g.node(node_id);
    const PlacedNode& here = take(node_id);
    Subtree out;
    out.level = here.level;
    out.cell = here.cell;

    switch (n.type) {
      case NodeType::terminal: {
        if (here.level < 0 || here.level >= pyr.level_count())
          fail_invalid("parse walk: terminal level out of pyramid bounds");
        const auto& grid = pyr.levels[here.level].features;
        if (here.cell.x < 0 || here.cell.y < 0 || here.cell.x + n.tw > grid.width() ||
            here.cell.y + n.th > grid.height())
          fail_invalid("parse walk: terminal placement out of pyramid bounds");
        double acc = 0.0;
        std::size_t wi = 0;
        for (int wy = 0; wy < n.th; ++wy) {
          for (int wx = 0; wx < n.tw; ++wx) {
            const auto cell = grid.cell(here.cell.x + wx, here.cell.y + wy);
            for (int c = 0; c < n.channels; ++c) acc += n.appearance[wi++] * cell[c];
          }
        }
        out.score = acc;  // deformation is charged by the parent
        out.has_terminal = true;
        out.terminal_id = node_id;
        break;
      }
      case NodeType::and_node: {
        double acc = n.bias;
        Subtree first_term;
        for (int child : n.children) {
          Subtree sub = walk_child(child, here);
          acc += sub.score;
          if (sub.has_terminal && !first_term.has_terminal) first_term = sub;
        }
        out.score = acc;
        if (first_term.has_terminal) {
          out.has_terminal = true;
          out.terminal_id = first_term.terminal_id;
          // And-nodes keep their own position; terminal info is for box output.
        }
        if (n.temporal) linked.push_back({node_id, here.level, here.cell, -1});
        if (n.view_id >= 0 && view_id) *view_id = n.view_id;
        if (n.type_id >= 0 && type_id) *type_id = n.type_id;
        break;
      }
      case NodeType::or_node: {
        const int idx = here.chosen_child;
        if (idx < 0 || idx >= static_cast<int>(n.children.size()))
          fail_invalid("parse walk: Or-node " + std::to_string(node_id) +
                       " missing chosen branch");
        Subtree sub = walk_child(n.children[static_cast<std::size_t>(idx)], here);
        out.score = sub.score + n.child_bias[static_cast<std::size_t>(idx)];
        out.has_terminal = sub.has_terminal;
        out.terminal_id = sub.terminal_id;
        if (sub.has_terminal) {
          out.level = sub.level;
          out.cell = sub.cell;
        }
        if (n.temporal) {
          // A part Or-node is positioned by its placed terminal.
          linked.push_back({node_id, out.level, out.cell, -1});
        }
        if (!n.part_name.empty() && parts) {
          PartObservation obs;
          obs.name = n.part_name;
          obs.kind = n.part_kind;
          const Node& branch = g.node(n.children[static_cast<std::size_t>(idx)]);
          obs.status = branch.status_index;
          obs.score = out.score;
          obs.level = out.level;
          obs.cell = out.cell;
          if (sub.has_terminal) obs.box = terminal_box(g, sub.terminal_id, pyr, sub.level, sub.cell);
          parts->push_back(std::move(obs));
        }
        if (n.view_id >= 0 && view_id) *view_id = n.view_id;
        break;
      }
    }

    if (out.has_terminal && car_box) {
      const Node& t = g.node(out.terminal_id);
      if (t.is_body) *car_box = terminal_box(g, out.terminal_id, pyr, out.level, out.cell);
    }
    return out;
  }

  Subtree walk_child(int child_id, const PlacedNode& parent) {
    const Node& child = g.node(child_id);
    Subtree sub = walk(child_id);
    if (child.is_terminal()) {
      // Deformation relative to the anchor position under this parent.
      const int base_x = (child.scale_factor ? 2 * parent.cell.x : parent.cell.x) + child.anchor_x;
      const int base_y = (child.scale_factor ? 2 * parent.cell.y : parent.cell.y) + child.anchor_y;
      const auto def = deformation_feature(sub.cell.x - base_x, sub.cell.y - base_y);
      double cost = 0.0;
      for (int i = 0; i < 4; ++i) cost += child.deformation[static_cast<std::size_t>(i)] * def[static_cast<std::size_t>(i)];
      sub.score -= cost;
    }
    return sub;
  }
};

}  // namespace

std::vector<PlacedNode> linked_placements(const AOGraph& g, const ParseTree& pt,
                                          const FeaturePyramid& pyr) {
  ParseWalker walker{g, pt, pyr};
  walker.walk(g.root);
  return walker.linked;
}

double score_parse_tree(const AOGraph& g, ParseTree& pt, const FeaturePyramid& pyr,
                        const FlowPyramid* flow) {
  ParseWalker walker{g, pt, pyr};
  pt.parts.clear();
  walker.parts = &pt.parts;
  walker.car_box = &pt.car_box;
  walker.view_id = &pt.view_id;
  walker.type_id = &pt.type_id;
  const auto root = walker.walk(g.root);
  if (walker.cursor != pt.placed.size())
    fail_invalid("parse walk: unused placement entries");

  double score = root.score;
  if (!pt.next_linked.empty()) {
    std::unordered_map<int, const PlacedNode*> next;
    for (const auto& p : pt.next_linked) next[p.node_id] = &p;
    for (const auto& now : walker.linked) {
      auto it = next.find(now.node_id);
      if (it == next.end()) continue;
      const Node& n = g.node(now.node_id);
      if (n.temporal_weight == 0.0) continue;
      const PlacedNode& nxt = *it->second;
      if (nxt.level != now.level)
        fail_invalid("temporal placements must share a pyramid level");
      Vec2f f{};
      if (flow && now.level < static_cast<int>(flow->levels.size())) {
        const auto& fg = flow->levels[static_cast<std::size_t>(now.level)];
        if (fg.in_bounds(now.cell.x, now.cell.y)) f = fg.at(now.cell.x, now.cell.y);
      }
      score -= n.temporal_weight * temporal_feature(now.cell, nxt.cell, f);
    }
  }
  return score;
}

double score_parse_graph(const AOGraph& g, ParseGraph& pg,
                         const std::vector<FeaturePyramid>& pyramids,
                         const std::vector<FlowPyramid>& flows) {
  if (pg.trees.empty()) return 0.0;
  double total = 0.0;
  for (auto& pt : pg.trees) {
    const std::size_t i = static_cast<std::size_t>(pt.pair_index);
    if (i >= pyramids.size()) fail_invalid("parse graph: pair index out of range");
    const FlowPyramid* flow = i < flows.size() ? &flows[i] : nullptr;
    total += score_parse_tree(g, pt, pyramids[i], flow);
  }
  return total / static_cast<double>(pg.trees.size());
}

void accumulate_pair_feature(const AOGraph& g, const ParseTree& pt, const FeaturePyramid& pyr,
                             const FlowPyramid* flow, double weight, std::span<double> acc) {
  const WeightLayout layout = weight_layout(g);
  if (acc.size() != layout.total) fail_invalid("accumulate_pair_feature: bad accumulator size");

  std::unordered_map<int, std::size_t> app_off, def_off, temporal_off, bias_off;
  for (const auto& b : layout.appearance) app_off[b.node] = b.offset;
  for (const auto& b : layout.deformation) def_off[b.node] = b.offset;
  for (const auto& b : layout.temporal) temporal_off[b.node] = b.offset;
  for (const auto& b : layout.bias) bias_off[b.node] = b.offset;

  struct Frame {
    int node_id;
    const PlacedNode* parent;  // for terminals (deformation anchor)
  };

  std::size_t cursor = 0;
  std::vector<PlacedNode> linked;
  // Same depth-first order as the scoring walk.
  std::function<void(int, const PlacedNode*)> walk = [&](int node_id, const PlacedNode* parent) {
    if (cursor >= pt.placed.size()) fail_invalid("joint feature: placement list too short");
    const PlacedNode here = pt.placed[cursor++];
    if (here.node_id != node_id) fail_invalid("joint feature: placement order mismatch");
    const Node& n = g.node(node_id);
    switch (n.type) {
      case NodeType::terminal: {
        const auto& grid = pyr.levels[static_cast<std::size_t>(here.level)].features;
        if (here.cell.x < 0 || here.cell.y < 0 || here.cell.x + n.tw > grid.width() ||
            here.cell.y + n.th > grid.height())
          fail_invalid("joint feature: terminal placement out of pyramid bounds");
        std::size_t wi = app_off.at(node_id);
        for (int wy = 0; wy < n.th; ++wy)
          for (int wx = 0; wx < n.tw; ++wx) {
            const auto cell = grid.cell(here.cell.x + wx, here.cell.y + wy);
            for (int c = 0; c < n.channels; ++c) acc[wi++] += weight * cell[c];
          }
        if (!parent) fail_invalid("joint feature: terminal without parent placement");
        const int base_x =
            (n.scale_factor ? 2 * parent->cell.x : parent->cell.x) + n.anchor_x;
        const int base_y =
            (n.scale_factor ? 2 * parent->cell.y : parent->cell.y) + n.anchor_y;
        const auto def = deformation_feature(here.cell.x - base_x, here.cell.y - base_y);
        const std::size_t d0 = def_off.at(node_id);
        for (std::size_t i = 0; i < 4; ++i) acc[d0 + i] -= weight * def[i];
        break;
      }
      case NodeType::and_node: {
        acc[bias_off.at(node_id)] += weight;
        for (int child : n.children) walk(child, &here);
        if (n.temporal) linked.push_back(here);
        break;
      }
      case NodeType::or_node: {
        const int idx = here.chosen_child;
        if (idx < 0 || idx >= static_cast<int>(n.children.size()))
          fail_invalid("joint feature: Or-node missing chosen branch");
        acc[bias_off.at(node_id) + static_cast<std::size_t>(idx)] += weight;
        const std::size_t before = cursor;
        walk(n.children[static_cast<std::size_t>(idx)], &here);
        if (n.temporal) {
          // Part position = placed terminal of the chosen branch (first
          // terminal entry consumed inside the branch).
          PlacedNode pos = here;
          for (std::size_t k = before; k < cursor; ++k) {
            if (g.node(pt.placed[k].node_id).is_terminal()) {
              pos = pt.placed[k];
              break;
            }
          }
          pos.node_id = node_id;
          linked.push_back(pos);
        }
        break;
      }
    }
  };
  walk(g.root, nullptr);
  if (cursor != pt.placed.size()) fail_invalid("joint feature: unused placement entries");

  if (!pt.next_linked.empty()) {
    std::unordered_map<int, const PlacedNode*> next;
    for (const auto& p : pt.next_linked) next[p.node_id] = &p;
    for (const auto& now : linked) {
      auto it = next.find(now.node_id);
      if (it == next.end()) continue;
      auto slot = temporal_off.find(now.node_id);
      if (slot == temporal_off.end()) continue;
      Vec2f f{};
      if (flow && now.level < static_cast<int>(flow->levels.size())) {
        const auto& fg = flow->levels[static_cast<std::size_t>(now.level)];
        if (fg.in_bounds(now.cell.x, now.cell.y)) f = fg.at(now.cell.x, now.cell.y);
      }
      acc[slot->second] -= weight * temporal_feature(now.cell, it->second->cell, f);
    }
  }
}

std::vector<double> joint_feature(const AOGraph& g, const ParseGraph& pg,
                                  const std::vector<FeaturePyramid>& pyramids,
                                  const std::vector<FlowPyramid>& flows) {
  const WeightLayout layout = weight_layout(g);
  std::vector<double> acc(layout.total, 0.0);
  if (pg.trees.empty()) return acc;
  const double weight = 1.0 / static_cast<double>(pg.trees.size());
  for (const auto& pt : pg.trees) {
    const std::size_t i = static_cast<std::size_t>(pt.pair_index);
    const FlowPyramid* flow = i < flows.size() ? &flows[i] : nullptr;
    accumulate_pair_feature(g, pt, pyramids.at(i), flow, weight, acc);
  }
  return acc;
}

}  // namespace carfluents
