#include "infer/frame_pass.hpp"

#include <limits>

#include "pyr/filter.hpp"
#include "util/errors.hpp"

namespace carfluents {

namespace {

constexpr double kNegInf = -std::numeric_limits<double>::infinity();

}  // namespace

double FramePass::child_contribution(int child_id, int level, int x, int y) const {
  const Node& child = graph->node(child_id);
  if (!child.is_terminal()) {
    const auto& map = nodes[static_cast<std::size_t>(level)][static_cast<std::size_t>(child_id)];
    if (map.score.empty()) return kNegInf;
    return map.score.at(x, y);
  }
  const int tl = level - child.scale_factor * graph->feature_spec.interval;
  if (tl < 0 || tl >= level_count()) return kNegInf;
  const auto& tm = terms[static_cast<std::size_t>(tl)][static_cast<std::size_t>(child_id)];
  if (!tm.ok) return kNegInf;
  const int bx = (child.scale_factor ? 2 * x : x) + child.anchor_x - tm.qx0;
  const int by = (child.scale_factor ? 2 * y : y) + child.anchor_y - tm.qy0;
  if (!tm.dt_value.in_bounds(bx, by)) return kNegInf;
  return tm.dt_value.at(bx, by);
}

bool FramePass::terminal_placement(int child_id, int level, int x, int y, int* out_level,
                                   Cell* out_cell) const {
  const Node& child = graph->node(child_id);
  if (!child.is_terminal()) return false;
  const int tl = level - child.scale_factor * graph->feature_spec.interval;
  if (tl < 0 || tl >= level_count()) return false;
  const auto& tm = terms[static_cast<std::size_t>(tl)][static_cast<std::size_t>(child_id)];
  if (!tm.ok) return false;
  const int bx = (child.scale_factor ? 2 * x : x) + child.anchor_x - tm.qx0;
  const int by = (child.scale_factor ? 2 * y : y) + child.anchor_y - tm.qy0;
  if (!tm.dt_value.in_bounds(bx, by)) return false;
  const Cell src = tm.dt_arg.at(bx, by);
  if (src.x < 0) return false;
  *out_level = tl;
  *out_cell = src;
  return true;
}

FramePass frame_pass(const AOGraph& g, const FeaturePyramid& pyramid) {
  {
    const auto violations = validate_graph(g);
    if (!violations.empty()) fail_invalid("frame_pass: invalid graph: " + violations.front());
  }
  FramePass pass;
  pass.graph = &g;
  pass.pyramid = &pyramid;
  const int levels = pyramid.level_count();
  pass.nodes.assign(static_cast<std::size_t>(levels), {});
  pass.terms.assign(static_cast<std::size_t>(levels), {});
  for (int l = 0; l < levels; ++l) {
    pass.nodes[static_cast<std::size_t>(l)].resize(g.nodes.size());
    pass.terms[static_cast<std::size_t>(l)].resize(g.nodes.size());
  }

  // Terminal maps at their own levels. The query window covers anchor bases
  // reachable from any parent cell at level tl + interval*sigma.
  for (const auto& n : g.nodes) {
    if (!n.is_terminal()) continue;
    for (int tl = 0; tl < levels; ++tl) {
      const auto& grid = pyramid.levels[static_cast<std::size_t>(tl)].features;
      if (grid.channels() != n.channels) {
        fail_invalid("frame_pass: terminal " + std::to_string(n.id) +
                     " channel count does not match pyramid");
      }
      auto& tm = pass.terms[static_cast<std::size_t>(tl)][static_cast<std::size_t>(n.id)];
      if (n.tw > grid.width() || n.th > grid.height()) {
        pass.skipped.push_back("terminal " + std::to_string(n.id) + " skipped at level " +
                               std::to_string(tl) + " (template exceeds level size)");
        continue;
      }
      const int rl = n.scale_factor ? tl + g.feature_spec.interval : tl;
      if (rl >= levels) continue;  // no parent level places this template here
      const auto& ref = pyramid.levels[static_cast<std::size_t>(rl)].features;
      const int scale = n.scale_factor ? 2 : 1;
      const int qx0 = std::min(n.anchor_x, scale * (ref.width() - 1) + n.anchor_x);
      const int qx1 = std::max(n.anchor_x, scale * (ref.width() - 1) + n.anchor_x);
      const int qy0 = std::min(n.anchor_y, scale * (ref.height() - 1) + n.anchor_y);
      const int qy1 = std::max(n.anchor_y, scale * (ref.height() - 1) + n.anchor_y);
      tm.response = filter_response(grid, n.appearance, n.tw, n.th);
      tm.qx0 = qx0;
      tm.qy0 = qy0;
      dt_deform_to_query(tm.response, n.deformation, qx0, qx1 - qx0 + 1, qy0, qy1 - qy0 + 1,
                         &tm.dt_value, &tm.dt_arg);
      tm.ok = true;
    }
  }

  const std::vector<int> order = g.topological_order();
  for (int l = 0; l < levels; ++l) {
    const auto& ref = pyramid.levels[static_cast<std::size_t>(l)].features;
    const int w = ref.width();
    const int h = ref.height();
    for (int id : order) {
      const Node& n = g.node(id);
      if (n.is_terminal()) continue;
      NodeMap& map = pass.nodes[static_cast<std::size_t>(l)][static_cast<std::size_t>(id)];
      map.score = Grid2D<double>(w, h, kNegInf);
      if (n.is_or()) map.arg_child = Grid2D<std::int16_t>(w, h, static_cast<std::int16_t>(-1));
      for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
          if (n.is_and()) {
            double acc = n.bias;
            for (int child : n.children) {
              const double c = pass.child_contribution(child, l, x, y);
              if (c == kNegInf) {
                acc = kNegInf;
                break;
              }
              acc += c;
            }
            map.score.at(x, y) = acc;
          } else {
            double best = kNegInf;
            int best_idx = -1;
            for (std::size_t ci = 0; ci < n.children.size(); ++ci) {
              const double c = pass.child_contribution(n.children[ci], l, x, y);
              if (c == kNegInf) continue;
              const double v = c + n.child_bias[ci];
              if (v > best) {  // ties keep the lowest child index
                best = v;
                best_idx = static_cast<int>(ci);
              }
            }
            map.score.at(x, y) = best;
            map.arg_child.at(x, y) = static_cast<std::int16_t>(best_idx);
          }
        }
      }
    }
  }
  return pass;
}

std::unordered_map<int, NodeMap> recompute_with_overrides(
    const FramePass& pass, int level,
    const std::unordered_map<int, const Grid2D<double>*>& overrides) {
  const AOGraph& g = *pass.graph;
  std::unordered_map<int, NodeMap> out;
  const auto order = g.topological_order();

  // A node needs recomputation iff one of its descendants is overridden.
  std::vector<bool> dirty(g.nodes.size(), false);
  for (int id : order) {
    const Node& n = g.node(id);
    if (overrides.count(id)) continue;  // read directly, never recomputed
    for (int child : n.children) {
      if (overrides.count(child) || dirty[static_cast<std::size_t>(child)]) {
        dirty[static_cast<std::size_t>(id)] = true;
        break;
      }
    }
  }

  auto child_value = [&](int child, int x, int y) -> double {
    if (auto it = overrides.find(child); it != overrides.end()) {
      if (it->second->empty()) return kNegInf;
      return it->second->at(x, y);
    }
    if (auto it = out.find(child); it != out.end()) return it->second.score.at(x, y);
    return pass.child_contribution(child, level, x, y);
  };

  const auto& ref = pass.pyramid->levels[static_cast<std::size_t>(level)].features;
  for (int id : order) {
    if (!dirty[static_cast<std::size_t>(id)]) continue;
    const Node& n = g.node(id);
    NodeMap map;
    map.score = Grid2D<double>(ref.width(), ref.height(), kNegInf);
    if (n.is_or())
      map.arg_child = Grid2D<std::int16_t>(ref.width(), ref.height(), static_cast<std::int16_t>(-1));
    for (int y = 0; y < ref.height(); ++y) {
      for (int x = 0; x < ref.width(); ++x) {
        if (n.is_and()) {
          double acc = n.bias;
          for (int child : n.children) {
            const double c = child_value(child, x, y);
            if (c == kNegInf) {
              acc = kNegInf;
              break;
            }
            acc += c;
          }
          map.score.at(x, y) = acc;
        } else {
          double best = kNegInf;
          int best_idx = -1;
          for (std::size_t ci = 0; ci < n.children.size(); ++ci) {
            const double c = child_value(n.children[ci], x, y);
            if (c == kNegInf) continue;
            const double v = c + n.child_bias[ci];
            if (v > best) {
              best = v;
              best_idx = static_cast<int>(ci);
            }
          }
          map.score.at(x, y) = best;
          map.arg_child.at(x, y) = static_cast<std::int16_t>(best_idx);
        }
      }
    }
    out.emplace(id, std::move(map));
  }
  return out;
}

}  // namespace carfluents
