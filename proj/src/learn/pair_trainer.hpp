#pragma once

#include <memory>
#include <optional>
#include <vector>

#include "aog/parse.hpp"
#include "data/annotation.hpp"
#include "infer/frame_pass.hpp"

namespace carfluents {

struct PairTrainConfig {
  double ov = 0.5;  // minimum box IoU against the annotation
  int radius = 2;   // latent search radius in cells (relabel only)
};

/// Exact training-time inference over one frame pair. Temporal terms are
/// conditioned on the frame-(i+1) placements: the relabel step restricts
/// them to the next frame's annotation neighborhood, the loss-augmented
/// step leaves them free (their best value folds into the maps per cell).
/// Requires car configurations shaped as And(body terminal, part Or-nodes
/// with single-terminal branches), which is what template initialization
/// builds.
class PairTrainer {
 public:
  PairTrainer(const AOGraph& g, const FramePass& pass_i, const FramePass& pass_i1,
              const FlowPyramid& flow_i, const FrameAnnotation& gt_i,
              const FrameAnnotation* gt_i1, const PairTrainConfig& cfg);

  /// Max S_pair over parses with the annotated view/type/statuses, every box
  /// IoU >= ov, and placements within `radius` cells of the annotation.
  /// Empty feasible set falls back to the annotation cells and sets
  /// *fell_back.
  std::optional<ParseTree> relabel(int pair_index, bool* fell_back);

  /// Exact argmax of S_pair + frame loss over all parses and levels.
  ParseTree loss_augmented(int pair_index);

  /// Top-k loss-augmented parses at spatially separated root cells
  /// (the argmax first). Fewer than k may come back on tiny grids.
  std::vector<ParseTree> loss_augmented_topk(int pair_index, int k);

  /// Best unconstrained parses whose car box center is displaced from the
  /// annotation by at least 2x the car size (background hard negatives).
  std::vector<ParseTree> far_negatives(int pair_index, int count);

  /// Best loss-violating parses at car cells near the annotation (the region
  /// the car-box-given evaluation searches): wrong statuses or infeasible
  /// placements under an almost-correct car placement.
  std::vector<ParseTree> near_violators(int pair_index, int count);

 private:
  struct Impl;
  std::shared_ptr<Impl> impl_;
};

}  // namespace carfluents
