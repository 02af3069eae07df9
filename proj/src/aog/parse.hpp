#pragma once

#include <optional>
#include <string>
#include <vector>

#include "aog/graph.hpp"
#include "pyr/pyramid.hpp"
#include "util/geometry.hpp"

namespace carfluents {

struct PlacedNode {
  int node_id = -1;
  int level = 0;
  Cell cell;
  int chosen_child = -1;  // Or-nodes: index into children
};

struct PartObservation {
  std::string name;
  PartKind kind = PartKind::none;
  int status = -1;
  BoxF box;
  double score = 0.0;  // part subtree contribution (appearance + deformation + biases)
  int level = 0;
  Cell cell;  // placed terminal cell
};

/// Instantiation of the graph over one frame pair (I_i, I_{i+1}): a full
/// selection for frame i in depth-first order (root first; Or-nodes record
/// the chosen branch and descend only into it) plus the frame-(i+1)
/// placements of the temporally linked nodes.
struct ParseTree {
  int pair_index = 0;  // index of frame i within the video
  std::vector<PlacedNode> placed;
  std::vector<PlacedNode> next_linked;
  double score = 0.0;

  // Derived summary, filled by the scorer / parser.
  BoxF car_box;
  int view_id = -1;
  int type_id = -1;
  std::vector<PartObservation> parts;
};

struct ParseGraph {
  std::vector<ParseTree> trees;  // N-1 pairs for an N-frame video (or a strided subset)
  double score = 0.0;            // mean of pair scores
};

/// Pixel box of a terminal window placed at (level, cell).
BoxF terminal_box(const AOGraph& g, int terminal_id, const FeaturePyramid& pyr, int level,
                  Cell cell);

/// Positions of temporally linked nodes inside a recorded parse, frame i.
/// An And-node reports its own cell; a part Or-node reports the placed
/// terminal of its chosen branch.
std::vector<PlacedNode> linked_placements(const AOGraph& g, const ParseTree& pt,
                                          const FeaturePyramid& pyr);

/// Recursive Eq.(2)-(4) evaluation of a recorded parse: appearance +
/// deformation + biases for frame i, minus theta_M * ||l - l_next + F(l)||^2
/// for every linked node with a recorded next-frame placement. Also refreshes
/// the derived summary (car box, parts, view/type). Throws if a placement
/// falls outside the pyramid.
double score_parse_tree(const AOGraph& g, ParseTree& pt, const FeaturePyramid& pyr,
                        const FlowPyramid* flow);

/// Mean of pair scores (Eq. 5 over the processed pairs).
double score_parse_graph(const AOGraph& g, ParseGraph& pg,
                         const std::vector<FeaturePyramid>& pyramids,
                         const std::vector<FlowPyramid>& flows);

/// Joint feature map in the weight layout: <pack_weights(g), phi> equals
/// score_parse_graph to rounding. Unselected branches contribute nothing.
std::vector<double> joint_feature(const AOGraph& g, const ParseGraph& pg,
                                  const std::vector<FeaturePyramid>& pyramids,
                                  const std::vector<FlowPyramid>& flows);

/// Single-pair joint feature scaled by `weight` into an existing accumulator.
void accumulate_pair_feature(const AOGraph& g, const ParseTree& pt, const FeaturePyramid& pyr,
                             const FlowPyramid* flow, double weight, std::span<double> acc);

}  // namespace carfluents
