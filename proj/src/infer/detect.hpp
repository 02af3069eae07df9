#pragma once

#include <optional>
#include <unordered_map>
#include <vector>

#include "aog/parse.hpp"
#include "infer/frame_pass.hpp"
#include "infer/lbp.hpp"

namespace carfluents {

/// Score maps of one frame pair after temporal coupling: coupled car maps
/// plus recomputed ancestor (view / root Or) maps per level.
struct PairMaps {
  const AOGraph* g = nullptr;
  const FramePass* pass_i = nullptr;
  const FramePass* pass_i1 = nullptr;
  const FlowPyramid* flow_i = nullptr;
  TemporalCoupling coupling;
  std::vector<std::unordered_map<int, NodeMap>> upper;  // [level][node id]
  bool converged = true;

  const Grid2D<double>* root_map(int level) const;
  /// Score of `node` at (level, x, y) honouring coupling overrides.
  double node_score(int node, int level, int x, int y) const;
  int or_choice(int node, int level, int x, int y) const;
  const CoupledCar* coupled_car(int level, int car_id) const;
};

/// Steps ii + iii of inference: run the part-root loops for every car
/// configuration, then recompute the upper Or layers on the coupled maps.
PairMaps st_window_score(const AOGraph& g, const FramePass& pass_i, const FramePass& pass_i1,
                         const FlowPyramid& flow_i, const LbpConfig& cfg);

/// Step iv: backtraces the parse tree at a root cell (argmax at Or-nodes,
/// decode tables across the temporal links). The recomputed score of the
/// returned tree equals the root map value at (level, cell).
ParseTree retrieve_parse(const PairMaps& maps, int level, Cell cell, int pair_index);

struct Detection {
  ParseTree parse;
  double score = 0.0;
  int pair_index = 0;
  BoxF car_box;
};

struct ScoredBox {
  BoxF box;
  double score;
  int level;
  Cell cell;
};

/// Greedy score-descending suppression at IoU > overlap, keeping at most k.
std::vector<ScoredBox> greedy_nms(std::vector<ScoredBox> candidates, double overlap, int k);

/// Conservative multi-proposal detection on one frame pair: every root cell
/// scoring >= tau enters NMS; the surviving top-k become detections with
/// full parse trees.
std::vector<Detection> detect_pair(const PairMaps& maps, double tau, double nms_overlap, int k,
                                   int pair_index);

/// Car box implied by a root cell without building the full parse (the body
/// terminal window of the selected configuration).
std::optional<BoxF> root_cell_car_box(const PairMaps& maps, int level, Cell cell);

}  // namespace carfluents
