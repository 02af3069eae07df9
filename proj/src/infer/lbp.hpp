#pragma once

#include <unordered_map>
#include <vector>

#include "aog/graph.hpp"
#include "infer/frame_pass.hpp"

namespace carfluents {

struct LbpConfig {
  int max_iters = 20;
  double epsilon = 1e-6;
};

/// Potentials of one part-root temporal loop {p, r, p~, r~}. The part state
/// is (cell, branch) on the part grid; the root state is a cell on the
/// reference grid. Spatial edges carry per-branch quadratic deformation from
/// the anchor base (base = scale*root_cell + anchor); temporal edges carry
/// theta * ||l - l~ + F(l)||^2 penalties.
struct LoopPotentials {
  Grid2D<double> phi_r;   // frame i root unary (part contribution excluded)
  Grid2D<double> phi_r1;  // frame i+1
  std::vector<Grid2D<double>> u_p;   // per-branch part unary, frame i
  std::vector<Grid2D<double>> u_p1;  // frame i+1
  std::vector<std::array<double, 4>> def;  // per-branch deformation weights
  std::vector<Cell> anchor;                // per-branch anchor
  int scale = 1;                           // 1 same level, 2 one octave finer
  double theta_r = 0.0;
  double theta_p = 0.0;
  const FlowGrid* flow_r = nullptr;  // frame-i flow on the root grid (null = zero)
  const FlowGrid* flow_p = nullptr;  // frame-i flow on the part grid

  int branches() const { return static_cast<int>(u_p.size()); }
};

/// Converged (or best-effort) messages and per-cell decode tables.
struct LoopResult {
  bool converged = false;
  int iters = 0;

  Grid2D<double> m_p_to_r, m_rt_to_r;    // into r
  Grid2D<double> m_r_to_rt, m_pt_to_rt;  // into r~
  Grid2D<double> m_pt_to_p;              // into p (branch-folded)
  Grid2D<double> m_p_to_pt;              // into p~
  std::vector<Grid2D<double>> m_r_to_p;   // per branch, into p
  std::vector<Grid2D<double>> m_rt_to_pt; // per branch, into p~

  // Decode tables from the final messages.
  Grid2D<std::int16_t> arg_branch_p;  // per r cell: best branch feeding m_p_to_r
  Grid2D<Cell> arg_cell_p;            // per r cell: best part cell
  Grid2D<Cell> arg_next_r;            // per r cell: best r~ (from m_rt_to_r)
  Grid2D<Cell> arg_next_p;            // per p cell: best p~ (from m_pt_to_p)
  Grid2D<std::int16_t> arg_branch_p1; // per r~ cell
  Grid2D<Cell> arg_cell_p1;           // per r~ cell

  Grid2D<double> belief_r;   // phi_r + m_p_to_r + m_rt_to_r
  Grid2D<double> belief_r1;  // phi_r1 + m_pt_to_rt + m_r_to_rt
};

LoopResult loop_lbp(const LoopPotentials& pot, const LbpConfig& cfg);

struct LoopAssignment {
  Cell r, p, r1, p1;
  int branch = -1, branch1 = -1;
  double score = 0.0;
};

/// True joint score of a loop assignment (all four unaries + both
/// deformations + both temporal penalties, with real-valued flow).
double loop_assignment_score(const LoopPotentials& pot, const LoopAssignment& a);

/// Best decoded assignment: the message-table decode at the belief argmax,
/// refined by an exact conditional pass over (p, p~, r~) given r.
LoopAssignment loop_decode_best(const LoopPotentials& pot, const LoopResult& res);

/// Temporal coupling of one frame pair: per car configuration And-node and
/// level, runs the part-root loops and emits the coupled car score map
/// (the evaluated pair score of the decoded parse at each root cell)
/// along with the decode tables needed for backtracing.
struct PartDecode {
  int part_or_id = -1;
  int term_level = 0;              // part grid level
  Grid2D<std::int16_t> branch;     // per root cell: chosen child index of the part Or
  Grid2D<Cell> cell;               // per root cell: frame-i terminal cell
  Grid2D<Cell> next_cell;          // per frame-i PART cell: frame-(i+1) terminal cell
};

struct CoupledCar {
  int car_id = -1;
  int level = 0;
  bool converged = true;
  Grid2D<double> value;   // pair score of the decoded parse, car placed per cell
  Grid2D<Cell> next_car;  // per root cell: decoded frame-(i+1) car cell
  std::vector<PartDecode> parts;
};

struct TemporalCoupling {
  bool converged = true;
  // [level][car And id]
  std::vector<std::unordered_map<int, CoupledCar>> cars;
};

TemporalCoupling temporal_couple(const AOGraph& g, const FramePass& pass_i,
                                 const FramePass& pass_i1, const FlowPyramid& flow_i,
                                 const LbpConfig& cfg);

}  // namespace carfluents
