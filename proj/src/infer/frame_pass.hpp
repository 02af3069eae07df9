#pragma once

#include <cstdint>
#include <string>
#include <unordered_map>
#include <vector>

#include "aog/graph.hpp"
#include "infer/dt.hpp"
#include "pyr/pyramid.hpp"

namespace carfluents {

/// Deformation-smoothed terminal maps at the template's own pyramid level.
/// Queries are anchor-base positions; the valid query window [qx0, qy0) x
/// (qx_len, qy_len) covers every base reachable from any parent cell.
struct TerminalMaps {
  bool ok = false;  // template fits this level
  Grid2D<double> response;
  Grid2D<double> dt_value;  // indexed by (base - q0)
  Grid2D<Cell> dt_arg;      // placement cell in response coordinates
  int qx0 = 0;
  int qy0 = 0;
};

struct NodeMap {
  Grid2D<double> score;
  Grid2D<std::int16_t> arg_child;  // Or-nodes: chosen child index per cell
};

/// Score maps for one frame with temporal links omitted (the per-frame
/// depth-first pass). Non-terminal nodes all live on the reference grid of
/// each level; terminals sit interval*sigma levels finer.
struct FramePass {
  const AOGraph* graph = nullptr;
  const FeaturePyramid* pyramid = nullptr;
  std::vector<std::vector<NodeMap>> nodes;        // [level][node_id]
  std::vector<std::vector<TerminalMaps>> terms;   // [level][node_id]
  std::vector<std::string> skipped;               // oversized templates, per level

  int level_count() const { return static_cast<int>(nodes.size()); }

  /// Contribution of `child` under a parent placed at (level, x, y):
  /// terminals read the deformation-smoothed map at their anchor base,
  /// non-terminals read their own map. -inf when unavailable.
  double child_contribution(int child_id, int level, int x, int y) const;

  /// Placement behind child_contribution for a terminal child: the best
  /// deformed cell at the template level. Returns false when unavailable.
  bool terminal_placement(int child_id, int level, int x, int y, int* out_level,
                          Cell* out_cell) const;
};

FramePass frame_pass(const AOGraph& g, const FeaturePyramid& pyramid);

/// Recomputes maps of every ancestor of the overridden nodes at one level
/// (bottom-up), reading overridden node scores from `overrides` and
/// everything else from the pass. Returns maps for the recomputed nodes.
std::unordered_map<int, NodeMap> recompute_with_overrides(
    const FramePass& pass, int level,
    const std::unordered_map<int, const Grid2D<double>*>& overrides);

}  // namespace carfluents
