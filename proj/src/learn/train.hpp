#pragma once

#include "learn/init.hpp"
#include "learn/pair_trainer.hpp"
#include "learn/solver.hpp"

namespace carfluents {

struct TrainConfig {
  double c = 1.0;
  double ov = 0.5;
  int radius = 2;
  int outer = 5;
  int stride = 3;
  std::uint64_t seed = 7;
  int cache_capacity = 120;    // hard negatives kept per video
  int mine_background = 3;     // far-window negatives added per video per pair
  int mine_topk = 4;           // loss-augmented candidates mined per pair
  int mine_near = 4;           // near-annotation violators mined per pair
  int mine_rounds = 4;         // mine/solve alternations per outer iteration
  bool freeze_negatives = false;  // mine only once (fixed working set)
  int workers = 1;
  SolverConfig solver;
};

struct TrainLogRow {
  int iter = 0;
  double objective = 0.0;
  int violations = 0;
  int cache_size = 0;
};

struct TrainResult {
  AOGraph graph;
  std::vector<TrainLogRow> log;
  bool relabels_converged = false;
  bool mining_saturated = false;  // last inner loop found nothing new to add
  int fallbacks = 0;              // relabel fell back to annotation cells
};

/// One structural-SVM weight update on the current working set; returns the
/// new packed weights and the Eq.-(7)-style objective value. Temporal and
/// quadratic deformation weights are floored at 1e-4.
std::pair<std::vector<double>, double> ssvm_step(const AOGraph& g, std::vector<double> theta,
                                                 const std::vector<HingeGroup>& groups, double c,
                                                 const SolverConfig& cfg);

/// Latent-structural-SVM training: alternates constrained positive
/// relabeling, hard-negative mining into a bounded per-video cache, and
/// weight updates, until the relabeled positives stop changing or
/// cfg.outer iterations elapse. Deterministic for a fixed seed and any
/// worker count. Aborts when the weight norm exceeds 1e6.
TrainResult train(AOGraph g, std::vector<TrainingSample>& samples, const TrainConfig& cfg);

/// Processed pair start indices for an N-frame video at the given stride.
std::vector<int> processed_pairs(int frame_count, int stride);

}  // namespace carfluents
