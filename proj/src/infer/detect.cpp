#include "infer/detect.hpp"

#include <algorithm>
#include <limits>

#include "util/errors.hpp"

namespace carfluents {

namespace {
constexpr double kNegInf = -std::numeric_limits<double>::infinity();
}

const Grid2D<double>* PairMaps::root_map(int level) const {
  const auto& lvl = upper[static_cast<std::size_t>(level)];
  if (auto it = lvl.find(g->root); it != lvl.end()) return &it->second.score;
  const auto& nm =
      pass_i->nodes[static_cast<std::size_t>(level)][static_cast<std::size_t>(g->root)];
  return nm.score.empty() ? nullptr : &nm.score;
}

double PairMaps::node_score(int node, int level, int x, int y) const {
  if (const CoupledCar* cc = coupled_car(level, node)) return cc->value.at(x, y);
  const auto& lvl = upper[static_cast<std::size_t>(level)];
  if (auto it = lvl.find(node); it != lvl.end()) return it->second.score.at(x, y);
  return pass_i->child_contribution(node, level, x, y);
}

int PairMaps::or_choice(int node, int level, int x, int y) const {
  const auto& lvl = upper[static_cast<std::size_t>(level)];
  if (auto it = lvl.find(node); it != lvl.end()) return it->second.arg_child.at(x, y);
  const auto& nm = pass_i->nodes[static_cast<std::size_t>(level)][static_cast<std::size_t>(node)];
  if (nm.arg_child.empty()) return -1;
  return nm.arg_child.at(x, y);
}

const CoupledCar* PairMaps::coupled_car(int level, int car_id) const {
  const auto& lvl = coupling.cars[static_cast<std::size_t>(level)];
  auto it = lvl.find(car_id);
  return it == lvl.end() ? nullptr : &it->second;
}

PairMaps st_window_score(const AOGraph& g, const FramePass& pass_i, const FramePass& pass_i1,
                         const FlowPyramid& flow_i, const LbpConfig& cfg) {
  PairMaps maps;
  maps.g = &g;
  maps.pass_i = &pass_i;
  maps.pass_i1 = &pass_i1;
  maps.flow_i = &flow_i;
  maps.coupling = temporal_couple(g, pass_i, pass_i1, flow_i, cfg);
  maps.converged = maps.coupling.converged;
  maps.upper.resize(static_cast<std::size_t>(pass_i.level_count()));
  for (int level = 0; level < pass_i.level_count(); ++level) {
    std::unordered_map<int, const Grid2D<double>*> overrides;
    for (const auto& [id, coupled] : maps.coupling.cars[static_cast<std::size_t>(level)])
      overrides.emplace(id, &coupled.value);
    if (overrides.empty()) continue;
    maps.upper[static_cast<std::size_t>(level)] =
        recompute_with_overrides(pass_i, level, overrides);
  }
  return maps;
}

namespace {

// Depth-first emission matching the parse-walk order: root first, Or-nodes
// descend only into their chosen branch.
void emit_parse(const PairMaps& maps, int node_id, int level, Cell cell, ParseTree* pt) {
  const AOGraph& g = *maps.g;
  const Node& n = g.node(node_id);
  const CoupledCar* coupled = n.is_and() ? maps.coupled_car(level, node_id) : nullptr;

  PlacedNode placed{node_id, level, cell, -1};
  if (n.is_or()) {
    placed.chosen_child = maps.or_choice(node_id, level, cell.x, cell.y);
    if (placed.chosen_child < 0)
      fail_invalid("retrieve_parse: no feasible branch at the requested cell");
  }
  pt->placed.push_back(placed);

  switch (n.type) {
    case NodeType::terminal:
      fail_runtime("retrieve_parse: terminals are emitted by their parents");
    case NodeType::or_node:
      emit_parse(maps, n.children[static_cast<std::size_t>(placed.chosen_child)], level, cell, pt);
      return;
    case NodeType::and_node:
      break;
  }

  for (std::size_t ci = 0; ci < n.children.size(); ++ci) {
    const int child_id = n.children[ci];
    const Node& child = g.node(child_id);
    if (child.is_terminal()) {
      int tl = 0;
      Cell tc;
      if (!maps.pass_i->terminal_placement(child_id, level, cell.x, cell.y, &tl, &tc))
        fail_invalid("retrieve_parse: terminal unavailable at the requested cell");
      pt->placed.push_back({child_id, tl, tc, -1});
      continue;
    }
    if (coupled && child.is_or() && child.temporal) {
      // Decoded by the loop: chosen branch + terminal cell, then the branch
      // subtree is emitted at the decoded placement.
      const PartDecode* dec = nullptr;
      for (const auto& pd : coupled->parts)
        if (pd.part_or_id == child_id) dec = &pd;
      if (!dec) fail_runtime("retrieve_parse: missing part decode");
      const int branch = dec->branch.at(cell.x, cell.y);
      const Cell tcell = dec->cell.at(cell.x, cell.y);
      if (branch < 0 || tcell.x < 0)
        fail_invalid("retrieve_parse: part has no feasible placement at the requested cell");
      pt->placed.push_back({child_id, level, cell, branch});
      const Node& branch_node = g.node(child.children[static_cast<std::size_t>(branch)]);
      if (branch_node.is_terminal()) {
        pt->placed.push_back({branch_node.id, dec->term_level, tcell, -1});
      } else {
        // single-terminal And branch
        pt->placed.push_back({branch_node.id, level, cell, -1});
        pt->placed.push_back({branch_node.children[0], dec->term_level, tcell, -1});
      }
      const Cell next = dec->next_cell.at(tcell.x, tcell.y);
      if (next.x >= 0) pt->next_linked.push_back({child_id, dec->term_level, next, -1});
      continue;
    }
    emit_parse(maps, child_id, level, cell, pt);
  }

  if (coupled && n.temporal) {
    const Cell next = coupled->next_car.at(cell.x, cell.y);
    if (next.x >= 0) pt->next_linked.push_back({node_id, level, next, -1});
  }
}

}  // namespace

ParseTree retrieve_parse(const PairMaps& maps, int level, Cell cell, int pair_index) {
  const Grid2D<double>* root = maps.root_map(level);
  if (!root || !root->in_bounds(cell.x, cell.y))
    fail_invalid("retrieve_parse: coordinate outside the root map");
  ParseTree pt;
  pt.pair_index = pair_index;
  emit_parse(maps, maps.g->root, level, cell, &pt);
  pt.score = root->at(cell.x, cell.y);
  // Derived summary (boxes, view, statuses) via the scoring walk.
  score_parse_tree(*maps.g, pt, *maps.pass_i->pyramid, maps.flow_i);
  return pt;
}

std::vector<ScoredBox> greedy_nms(std::vector<ScoredBox> candidates, double overlap, int k) {
  std::sort(candidates.begin(), candidates.end(), [](const ScoredBox& a, const ScoredBox& b) {
    if (a.score != b.score) return a.score > b.score;
    if (a.level != b.level) return a.level < b.level;
    if (a.cell.y != b.cell.y) return a.cell.y < b.cell.y;
    return a.cell.x < b.cell.x;
  });
  std::vector<ScoredBox> kept;
  for (const auto& c : candidates) {
    if (static_cast<int>(kept.size()) >= k) break;
    bool suppressed = false;
    for (const auto& kb : kept) {
      if (box_iou(c.box, kb.box) > overlap) {
        suppressed = true;
        break;
      }
    }
    if (!suppressed) kept.push_back(c);
  }
  return kept;
}

// Car box at a root cell without a full parse: the body terminal window of
// the selected configuration (falls back to a one-cell box if absent).
std::optional<BoxF> root_cell_car_box(const PairMaps& maps, int level, Cell cell) {
  const AOGraph& g = *maps.g;
  int node_id = g.root;
  while (true) {
    const Node& n = g.node(node_id);
    if (n.is_or()) {
      const int choice = maps.or_choice(node_id, level, cell.x, cell.y);
      if (choice < 0) return std::nullopt;
      node_id = n.children[static_cast<std::size_t>(choice)];
      continue;
    }
    if (n.is_and()) {
      for (int child : n.children) {
        const Node& cn = g.node(child);
        if (cn.is_terminal() && cn.is_body) {
          int tl = 0;
          Cell tc;
          if (!maps.pass_i->terminal_placement(child, level, cell.x, cell.y, &tl, &tc))
            return std::nullopt;
          return terminal_box(g, child, *maps.pass_i->pyramid, tl, tc);
        }
      }
      // No designated body; approximate with the cell footprint.
      const double ppc = maps.pass_i->pyramid->pixels_per_cell(level);
      return BoxF{cell.x * ppc, cell.y * ppc, ppc, ppc};
    }
    return std::nullopt;
  }
}

std::vector<Detection> detect_pair(const PairMaps& maps, double tau, double nms_overlap, int k,
                                   int pair_index) {
  std::vector<ScoredBox> candidates;
  for (int level = 0; level < maps.pass_i->level_count(); ++level) {
    const Grid2D<double>* root = maps.root_map(level);
    if (!root) continue;
    for (int y = 0; y < root->height(); ++y) {
      for (int x = 0; x < root->width(); ++x) {
        const double s = root->at(x, y);
        if (!(s >= tau)) continue;
        const auto box = root_cell_car_box(maps, level, Cell{x, y});
        if (!box) continue;
        candidates.push_back({*box, s, level, Cell{x, y}});
      }
    }
  }
  std::vector<Detection> detections;
  for (const auto& kept : greedy_nms(std::move(candidates), nms_overlap, k)) {
    Detection det;
    det.parse = retrieve_parse(maps, kept.level, kept.cell, pair_index);
    det.score = kept.score;
    det.pair_index = pair_index;
    det.car_box = det.parse.car_box;
    detections.push_back(std::move(det));
  }
  return detections;
}

}  // namespace carfluents
