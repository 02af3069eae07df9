#pragma once

#include <array>
#include <span>
#include <vector>

#include "util/geometry.hpp"
#include "util/grid.hpp"

namespace carfluents {

struct DtResult {
  Grid2D<double> value;
  Grid2D<Cell> arg;  // maximizing source cell; (-1,-1) where no finite source reaches
};

/// Generalized max-convolution with separable quadratic cost:
///   out(x, y) = max over (x', y') of in(x', y')
///               - w[0]*(x-x') - w[1]*(x-x')^2 - w[2]*(y-y') - w[3]*(y-y')^2
/// Quadratic weights w[1], w[3] must be strictly positive. Runs in O(W*H)
/// via two lower-envelope passes; -inf inputs are treated as masked cells.
/// The reported value is recomputed from the argmax with the same expression
/// a naive scan would use, so results match brute force exactly.
DtResult distance_transform(const Grid2D<double>& input, const std::array<double, 4>& weights);

/// 1-D envelope over scattered sources. Sources sit at strictly increasing
/// integer positions pos[i] carrying height val[i]; queries are the integers
/// q_start .. q_start+n_query-1. out_val[q] = max_i val[i] - w1*(Q-pos[i])
/// - w2*(Q-pos[i])^2 with Q = q_start+q; out_arg[q] = maximizing i (or -1).
void dt_envelope_1d(std::span<const double> val, std::span<const int> pos, double w1, double w2,
                    int q_start, int n_query, std::span<double> out_val, std::span<int> out_arg);

/// Max-scatter of a grid by per-cell rounded shifts: each source cell (x, y)
/// lands on (x + round(shift.u), y + round(shift.v)); collisions keep the max.
/// Cells shifted out of bounds are dropped; untouched targets stay -inf.
/// `origin`, when non-null, records the winning source cell per target.
Grid2D<double> scatter_shift_max(const Grid2D<double>& input, const FlowGrid& shift,
                                 Grid2D<Cell>* origin);

/// Deformation envelope queried at anchor bases:
///   val(q) = max over placements t of in(t) - <w, (tx-qx, (tx-qx)^2, ty-qy, (ty-qy)^2)>
/// for queries q on [qx0, qx0+qx_len) x [qy0, qy0+qy_len). This is the
/// parent-side read of a child template's deformed score.
void dt_deform_to_query(const Grid2D<double>& in, const std::array<double, 4>& w, int qx0,
                        int qx_len, int qy0, int qy_len, Grid2D<double>* val, Grid2D<Cell>* arg);

/// Deformation envelope over scaled/anchored sources:
///   val(q) = max over source cells s of in(s) - <w, (qx-Px, (qx-Px)^2, qy-Py, (qy-Py)^2)>
/// with P = scale*s + anchor. This is the child-side read of a parent map
/// through the same deformation (scale 2 covers one-octave-finer children).
void dt_deform_from_source(const Grid2D<double>& in, const std::array<double, 4>& w, int scale,
                           Cell anchor, int qx0, int qx_len, int qy0, int qy_len,
                           Grid2D<double>* val, Grid2D<Cell>* arg);

/// Temporal max-product message, gather form (into frame i):
///   m(l) = max over src of h(src) - theta * ||l + round(flow(l)) - src||^2.
/// theta == 0 yields an all-zero message whose arg is the global argmax of h.
/// When normalize is set the message maximum is shifted to 0.
void temporal_message_gather(const Grid2D<double>& h, double theta, const FlowGrid* flow,
                             bool normalize, Grid2D<double>* val, Grid2D<Cell>* arg);

/// Temporal max-product message, scatter form (into frame i+1):
///   m(l1) = max over src of h(src) - theta * ||src + round(flow(src)) - l1||^2.
void temporal_message_scatter(const Grid2D<double>& h, double theta, const FlowGrid* flow,
                              bool normalize, Grid2D<double>* val, Grid2D<Cell>* arg);

}  // namespace carfluents
