#pragma once

#include "aog/parse.hpp"
#include "infer/lbp.hpp"
#include "util/rng.hpp"

namespace carfluents::oracle {

/// Seeded random instances for the brute-force equivalence checks.

Grid2D<double> random_score_grid(Rng& rng, int w, int h, double lo = -5.0, double hi = 5.0);
FeatureGrid random_feature_grid(Rng& rng, int w, int h, int c);

/// Synthetic pyramid: `levels` dyadic levels built directly from random
/// feature grids (level k is (w>>k, h>>k)).
FeaturePyramid random_pyramid(Rng& rng, int w, int h, int c, int levels);

struct TreeGraphOptions {
  int max_branches = 3;   // root Or children (And configurations)
  int max_parts = 3;      // terminals per And
  int max_template = 2;   // template side in cells
  bool allow_sigma1 = true;
  int channels = 3;
};

/// Random 3-level graph (root Or -> And configurations -> terminals) with
/// no temporal links. Valid by construction.
AOGraph random_tree_graph(Rng& rng, const TreeGraphOptions& opts);

/// Random temporally linked model: root Or -> car And (temporal) with a body
/// terminal and `parts` status Or-nodes (temporal), single-terminal branches.
AOGraph random_coupled_graph(Rng& rng, int parts, int branches_per_part, int channels);

/// Random valid parse graph over `pairs` frame pairs (placements uniform over
/// feasible cells, branches uniform); used by the duality check.
ParseGraph random_parse_graph(Rng& rng, const AOGraph& g,
                              const std::vector<FeaturePyramid>& pyramids, int pairs);

/// Random 4-node loop potentials on square grids, single- or multi-branch.
LoopPotentials random_loop(Rng& rng, int grid, int branches, bool with_flow,
                           std::vector<FlowGrid>* flow_storage);

}  // namespace carfluents::oracle
