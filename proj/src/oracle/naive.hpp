#pragma once

#include <array>
#include <vector>

#include "aog/graph.hpp"
#include "infer/lbp.hpp"
#include "pyr/pyramid.hpp"
#include "track/viterbi.hpp"
#include "util/grid.hpp"

namespace carfluents::oracle {

/// Brute-force references. Everything here is written as a plain scan with
/// no shared code on the fast paths it checks; keep it that way.

struct NaiveDt {
  Grid2D<double> value;
  Grid2D<Cell> arg;
};

/// O(W^2 H^2) max-convolution: out(x,y) = max over (x',y') of
/// ((in(x',y') - w0*dx - w1*dx^2) - w2*dy - w3*dy^2), dx = x-x', dy = y-y'.
NaiveDt naive_distance_transform(const Grid2D<double>& in, const std::array<double, 4>& w);

/// Triple-loop correlation (window row, column, channel order).
Grid2D<double> naive_filter_response(const FeatureGrid& grid, const std::vector<double>& weights,
                                     int tw, int th);

struct NaiveParse {
  double score;
  int level = -1;
  Cell cell;
};

/// Exhaustive spatial parse maximum over all levels, root cells, Or-branch
/// combinations and terminal placements; temporal links ignored.
NaiveParse naive_best_parse(const AOGraph& g, const FeaturePyramid& pyr);

/// Same maximization restricted to one root cell.
double naive_cell_score(const AOGraph& g, const FeaturePyramid& pyr, int level, Cell cell);

/// Exhaustive joint optimum of a 4-node part-root loop.
struct NaiveLoopOpt {
  double score;
  LoopAssignment assignment;
};
NaiveLoopOpt naive_loop_optimum(const LoopPotentials& pot);

/// Exhaustive best path through per-frame proposal lists under the
/// part-HMM objective (ties: earliest-frame lowest index).
struct NaivePath {
  double score;
  std::vector<int> path;
};
NaivePath naive_best_path(const std::vector<std::vector<TrackProposal>>& per_frame,
                          const std::array<double, 6>& theta, double lambda);

/// Naive VLAD: nearest-centroid residual accumulation, no normalization.
std::vector<double> naive_vlad_raw(const std::vector<std::vector<double>>& locals,
                                   const std::vector<std::vector<double>>& centroids);

}  // namespace carfluents::oracle
