#include "infer/lbp.hpp"

#include <cmath>
#include <limits>

#include "util/errors.hpp"

namespace carfluents {

namespace {

constexpr double kNegInf = -std::numeric_limits<double>::infinity();

Grid2D<double> add_grids(const Grid2D<double>& a, const Grid2D<double>& b) {
  Grid2D<double> out(a.width(), a.height(), kNegInf);
  for (int y = 0; y < a.height(); ++y)
    for (int x = 0; x < a.width(); ++x) {
      const double va = a.at(x, y);
      const double vb = b.at(x, y);
      out.at(x, y) = (va == kNegInf || vb == kNegInf) ? kNegInf : va + vb;
    }
  return out;
}

double grid_delta(const Grid2D<double>& a, const Grid2D<double>& b) {
  double d = 0.0;
  for (int y = 0; y < a.height(); ++y)
    for (int x = 0; x < a.width(); ++x) {
      const double va = a.at(x, y);
      const double vb = b.at(x, y);
      const bool fa = va > kNegInf;
      const bool fb = vb > kNegInf;
      if (fa != fb) return std::numeric_limits<double>::infinity();
      if (fa) d = std::max(d, std::abs(va - vb));
    }
  return d;
}

// Message from the part side into the root side: per-branch deformation
// envelope queried at anchor bases, folded over branches.
void msg_part_to_root(const std::vector<Grid2D<double>>& unary,
                      const std::vector<std::array<double, 4>>& def,
                      const std::vector<Cell>& anchor, int scale, const Grid2D<double>& incoming,
                      int rw, int rh, Grid2D<double>* out, Grid2D<std::int16_t>* arg_branch,
                      Grid2D<Cell>* arg_cell) {
  *out = Grid2D<double>(rw, rh, kNegInf);
  if (arg_branch) *arg_branch = Grid2D<std::int16_t>(rw, rh, static_cast<std::int16_t>(-1));
  if (arg_cell) *arg_cell = Grid2D<Cell>(rw, rh, Cell{-1, -1});
  for (std::size_t b = 0; b < unary.size(); ++b) {
    const Grid2D<double> in = add_grids(unary[b], incoming);
    const int qx0 = anchor[b].x;
    const int qy0 = anchor[b].y;
    const int qx_len = scale * (rw - 1) + 1;
    const int qy_len = scale * (rh - 1) + 1;
    Grid2D<double> val;
    Grid2D<Cell> arg;
    dt_deform_to_query(in, def[b], qx0, qx_len, qy0, qy_len, &val, &arg);
    for (int y = 0; y < rh; ++y) {
      for (int x = 0; x < rw; ++x) {
        const int bx = scale * x;  // base - qx0
        const int by = scale * y;
        const double v = val.at(bx, by);
        if (v > out->at(x, y)) {
          out->at(x, y) = v;
          if (arg_branch) arg_branch->at(x, y) = static_cast<std::int16_t>(b);
          if (arg_cell) arg_cell->at(x, y) = arg.at(bx, by);
        }
      }
    }
  }
}

// Message from the root side into each part branch.
void msg_root_to_part(const Grid2D<double>& root_in,
                      const std::vector<std::array<double, 4>>& def,
                      const std::vector<Cell>& anchor, int scale, int pw, int ph,
                      std::vector<Grid2D<double>>* out) {
  out->resize(def.size());
  for (std::size_t b = 0; b < def.size(); ++b) {
    Grid2D<Cell> arg;
    dt_deform_from_source(root_in, def[b], scale, anchor[b], 0, pw, 0, ph, &(*out)[b], &arg);
  }
}

// h(t) = max_b unary[b](t) + per_branch[b](t); optional branch argmax.
Grid2D<double> fold_branches(const std::vector<Grid2D<double>>& unary,
                             const std::vector<Grid2D<double>>& per_branch,
                             Grid2D<std::int16_t>* arg_branch) {
  const int w = unary[0].width();
  const int h = unary[0].height();
  Grid2D<double> out(w, h, kNegInf);
  if (arg_branch) *arg_branch = Grid2D<std::int16_t>(w, h, static_cast<std::int16_t>(-1));
  for (std::size_t b = 0; b < unary.size(); ++b) {
    for (int y = 0; y < h; ++y)
      for (int x = 0; x < w; ++x) {
        const double u = unary[b].at(x, y);
        const double m = per_branch[b].at(x, y);
        if (u == kNegInf || m == kNegInf) continue;
        const double v = u + m;
        if (v > out.at(x, y)) {
          out.at(x, y) = v;
          if (arg_branch) arg_branch->at(x, y) = static_cast<std::int16_t>(b);
        }
      }
  }
  return out;
}

double deformation_cost(const std::array<double, 4>& w, int dx, int dy) {
  const auto f = deformation_feature(dx, dy);
  return w[0] * f[0] + w[1] * f[1] + w[2] * f[2] + w[3] * f[3];
}

}  // namespace

LoopResult loop_lbp(const LoopPotentials& pot, const LbpConfig& cfg) {
  if (pot.branches() == 0) fail_invalid("loop_lbp: no part branches");
  const int rw = pot.phi_r.width();
  const int rh = pot.phi_r.height();
  const int pw = pot.u_p[0].width();
  const int ph = pot.u_p[0].height();

  LoopResult res;
  res.m_p_to_r = Grid2D<double>(rw, rh, 0.0);
  res.m_rt_to_r = Grid2D<double>(rw, rh, 0.0);
  res.m_r_to_rt = Grid2D<double>(rw, rh, 0.0);
  res.m_pt_to_rt = Grid2D<double>(rw, rh, 0.0);
  res.m_pt_to_p = Grid2D<double>(pw, ph, 0.0);
  res.m_p_to_pt = Grid2D<double>(pw, ph, 0.0);
  res.m_r_to_p.assign(pot.u_p.size(), Grid2D<double>(pw, ph, 0.0));
  res.m_rt_to_pt.assign(pot.u_p.size(), Grid2D<double>(pw, ph, 0.0));

  Grid2D<Cell> next_r_arg(rw, rh, Cell{-1, -1});
  Grid2D<Cell> next_p_arg(pw, ph, Cell{-1, -1});

  // Fixed schedule per iteration: p->r, r->r~, r~->p~, p~->p, then the
  // mirrored sweep so both frames carry beliefs.
  for (int iter = 0; iter < cfg.max_iters; ++iter) {
    double delta = 0.0;

    Grid2D<double> m;
    msg_part_to_root(pot.u_p, pot.def, pot.anchor, pot.scale, res.m_pt_to_p, rw, rh, &m,
                     &res.arg_branch_p, &res.arg_cell_p);
    delta = std::max(delta, grid_delta(m, res.m_p_to_r));
    res.m_p_to_r = std::move(m);

    Grid2D<Cell> arg;
    temporal_message_scatter(add_grids(pot.phi_r, res.m_p_to_r), pot.theta_r, pot.flow_r, true,
                             &m, &arg);
    delta = std::max(delta, grid_delta(m, res.m_r_to_rt));
    res.m_r_to_rt = std::move(m);

    std::vector<Grid2D<double>> per_branch;
    msg_root_to_part(add_grids(pot.phi_r1, res.m_r_to_rt), pot.def, pot.anchor, pot.scale, pw, ph,
                     &per_branch);
    for (std::size_t b = 0; b < per_branch.size(); ++b) {
      delta = std::max(delta, grid_delta(per_branch[b], res.m_rt_to_pt[b]));
      res.m_rt_to_pt[b] = std::move(per_branch[b]);
    }

    temporal_message_gather(fold_branches(pot.u_p1, res.m_rt_to_pt, nullptr), pot.theta_p,
                            pot.flow_p, true, &m, &next_p_arg);
    delta = std::max(delta, grid_delta(m, res.m_pt_to_p));
    res.m_pt_to_p = std::move(m);

    msg_part_to_root(pot.u_p1, pot.def, pot.anchor, pot.scale, res.m_p_to_pt, rw, rh, &m,
                     &res.arg_branch_p1, &res.arg_cell_p1);
    delta = std::max(delta, grid_delta(m, res.m_pt_to_rt));
    res.m_pt_to_rt = std::move(m);

    temporal_message_gather(add_grids(pot.phi_r1, res.m_pt_to_rt), pot.theta_r, pot.flow_r, true,
                            &m, &next_r_arg);
    delta = std::max(delta, grid_delta(m, res.m_rt_to_r));
    res.m_rt_to_r = std::move(m);

    msg_root_to_part(add_grids(pot.phi_r, res.m_rt_to_r), pot.def, pot.anchor, pot.scale, pw, ph,
                     &per_branch);
    for (std::size_t b = 0; b < per_branch.size(); ++b) {
      delta = std::max(delta, grid_delta(per_branch[b], res.m_r_to_p[b]));
      res.m_r_to_p[b] = std::move(per_branch[b]);
    }

    temporal_message_scatter(fold_branches(pot.u_p, res.m_r_to_p, nullptr), pot.theta_p,
                             pot.flow_p, true, &m, &arg);
    delta = std::max(delta, grid_delta(m, res.m_p_to_pt));
    res.m_p_to_pt = std::move(m);

    res.iters = iter + 1;
    if (delta < cfg.epsilon) {
      res.converged = true;
      break;
    }
  }

  // Refresh decode tables against the final messages, innermost first so
  // each table sees its final incoming message.
  temporal_message_gather(add_grids(pot.phi_r1, res.m_pt_to_rt), pot.theta_r, pot.flow_r, true,
                          &res.m_rt_to_r, &res.arg_next_r);
  temporal_message_gather(fold_branches(pot.u_p1, res.m_rt_to_pt, nullptr), pot.theta_p,
                          pot.flow_p, true, &res.m_pt_to_p, &res.arg_next_p);
  msg_part_to_root(pot.u_p, pot.def, pot.anchor, pot.scale, res.m_pt_to_p, rw, rh, &res.m_p_to_r,
                   &res.arg_branch_p, &res.arg_cell_p);

  res.belief_r = add_grids(add_grids(pot.phi_r, res.m_p_to_r), res.m_rt_to_r);
  res.belief_r1 = add_grids(add_grids(pot.phi_r1, res.m_pt_to_rt), res.m_r_to_rt);
  return res;
}

double loop_assignment_score(const LoopPotentials& pot, const LoopAssignment& a) {
  if (a.branch < 0 || a.branch1 < 0) return kNegInf;
  double s = 0.0;
  s += pot.phi_r.at(a.r.x, a.r.y);
  s += pot.phi_r1.at(a.r1.x, a.r1.y);
  s += pot.u_p[static_cast<std::size_t>(a.branch)].at(a.p.x, a.p.y);
  s += pot.u_p1[static_cast<std::size_t>(a.branch1)].at(a.p1.x, a.p1.y);
  const Cell base{pot.scale * a.r.x + pot.anchor[static_cast<std::size_t>(a.branch)].x,
                  pot.scale * a.r.y + pot.anchor[static_cast<std::size_t>(a.branch)].y};
  const Cell base1{pot.scale * a.r1.x + pot.anchor[static_cast<std::size_t>(a.branch1)].x,
                   pot.scale * a.r1.y + pot.anchor[static_cast<std::size_t>(a.branch1)].y};
  s -= deformation_cost(pot.def[static_cast<std::size_t>(a.branch)], a.p.x - base.x,
                        a.p.y - base.y);
  s -= deformation_cost(pot.def[static_cast<std::size_t>(a.branch1)], a.p1.x - base1.x,
                        a.p1.y - base1.y);
  Vec2f fr{}, fp{};
  if (pot.flow_r) fr = pot.flow_r->at(a.r.x, a.r.y);
  if (pot.flow_p) fp = pot.flow_p->at(a.p.x, a.p.y);
  s -= pot.theta_r * temporal_feature(a.r, a.r1, fr);
  s -= pot.theta_p * temporal_feature(a.p, a.p1, fp);
  return s;
}

namespace {

int best_branch_for(const LoopPotentials& pot, bool next_frame, Cell part, Cell root) {
  const auto& unary = next_frame ? pot.u_p1 : pot.u_p;
  int best = -1;
  double bv = kNegInf;
  for (std::size_t b = 0; b < unary.size(); ++b) {
    const double u = unary[b].at(part.x, part.y);
    if (u == kNegInf) continue;
    const Cell base{pot.scale * root.x + pot.anchor[b].x, pot.scale * root.y + pot.anchor[b].y};
    const double v =
        u - deformation_cost(pot.def[b], part.x - base.x, part.y - base.y);
    if (v > bv) {
      bv = v;
      best = static_cast<int>(b);
    }
  }
  return best;
}

}  // namespace

namespace {

std::vector<Cell> top_cells(const Grid2D<double>& g, int m) {
  std::vector<Cell> cells;
  std::vector<double> vals;
  for (int y = 0; y < g.height(); ++y)
    for (int x = 0; x < g.width(); ++x) {
      const double v = g.at(x, y);
      if (!(v > kNegInf)) continue;
      if (static_cast<int>(cells.size()) < m) {
        cells.push_back(Cell{x, y});
        vals.push_back(v);
      } else {
        int worst = 0;
        for (int i = 1; i < m; ++i)
          if (vals[static_cast<std::size_t>(i)] < vals[static_cast<std::size_t>(worst)]) worst = i;
        if (v > vals[static_cast<std::size_t>(worst)]) {
          vals[static_cast<std::size_t>(worst)] = v;
          cells[static_cast<std::size_t>(worst)] = Cell{x, y};
        }
      }
    }
  return cells;
}

}  // namespace

LoopAssignment loop_decode_best(const LoopPotentials& pot, const LoopResult& res) {
  const int rw = pot.phi_r.width();
  const int rh = pot.phi_r.height();
  const int pw = pot.u_p[0].width();
  const int ph = pot.u_p[0].height();

  LoopAssignment best;
  best.score = kNegInf;
  auto consider = [&](LoopAssignment a) {
    if (a.branch < 0 || a.branch1 < 0 || a.r.x < 0 || a.r1.x < 0 || a.p.x < 0 || a.p1.x < 0)
      return;
    a.score = loop_assignment_score(pot, a);
    if (a.score > best.score) best = a;
  };

  // Message-table decode at the frame-i belief argmax.
  const auto seeds_r = top_cells(res.belief_r, 3);
  if (!seeds_r.empty()) {
    const Cell r_star = seeds_r.front();
    LoopAssignment a;
    a.r = r_star;
    a.branch = res.arg_branch_p.at(r_star.x, r_star.y);
    a.p = res.arg_cell_p.at(r_star.x, r_star.y);
    a.r1 = res.arg_next_r.at(r_star.x, r_star.y);
    if (a.p.x >= 0) a.p1 = res.arg_next_p.at(a.p.x, a.p.y);
    if (a.r1.x >= 0 && a.p1.x >= 0) a.branch1 = best_branch_for(pot, true, a.p1, a.r1);
    consider(a);
  }

  // Exact conditional optimum of (p, p~, r~) given r: the remaining graph is
  // a chain, solved with the same transforms the messages use.
  auto conditional_given_r = [&](Cell r_star) {
    Vec2f fr{};
    if (pot.flow_r) fr = pot.flow_r->at(r_star.x, r_star.y);
    Grid2D<double> q(rw, rh, kNegInf);
    for (int y = 0; y < rh; ++y)
      for (int x = 0; x < rw; ++x) {
        const double v = pot.phi_r1.at(x, y);
        if (v == kNegInf) continue;
        q.at(x, y) = v - pot.theta_r * temporal_feature(r_star, Cell{x, y}, fr);
      }
    std::vector<Grid2D<double>> w_branch;
    msg_root_to_part(q, pot.def, pot.anchor, pot.scale, pw, ph, &w_branch);
    Grid2D<std::int16_t> h_branch;
    const Grid2D<double> h = fold_branches(pot.u_p1, w_branch, &h_branch);
    Grid2D<double> gmsg;
    Grid2D<Cell> garg;
    temporal_message_gather(h, pot.theta_p, pot.flow_p, false, &gmsg, &garg);

    LoopAssignment c;
    c.r = r_star;
    double cb = kNegInf;
    for (std::size_t b = 0; b < pot.u_p.size(); ++b) {
      const Cell base{pot.scale * r_star.x + pot.anchor[b].x,
                      pot.scale * r_star.y + pot.anchor[b].y};
      for (int y = 0; y < ph; ++y)
        for (int x = 0; x < pw; ++x) {
          const double u = pot.u_p[b].at(x, y);
          const double gm = gmsg.at(x, y);
          if (u == kNegInf || gm == kNegInf) continue;
          const double v = u - deformation_cost(pot.def[b], x - base.x, y - base.y) + gm;
          if (v > cb) {
            cb = v;
            c.branch = static_cast<int>(b);
            c.p = Cell{x, y};
          }
        }
    }
    if (c.branch < 0) return;
    c.p1 = garg.at(c.p.x, c.p.y);
    if (c.p1.x < 0) return;
    c.branch1 = h_branch.at(c.p1.x, c.p1.y);
    if (c.branch1 < 0) return;
    Grid2D<double> wv;
    Grid2D<Cell> wa;
    dt_deform_from_source(q, pot.def[static_cast<std::size_t>(c.branch1)], pot.scale,
                          pot.anchor[static_cast<std::size_t>(c.branch1)], 0, pw, 0, ph, &wv,
                          &wa);
    c.r1 = wa.at(c.p1.x, c.p1.y);
    consider(c);
  };

  // Mirror: exact conditional optimum of (p~, p, r) given r~. Temporal costs
  // stay anchored at frame-i cells, so the chain is rebuilt from that side.
  auto conditional_given_r1 = [&](Cell r1_star) {
    Grid2D<double> q(rw, rh, kNegInf);
    for (int y = 0; y < rh; ++y)
      for (int x = 0; x < rw; ++x) {
        const double v = pot.phi_r.at(x, y);
        if (v == kNegInf) continue;
        Vec2f fr{};
        if (pot.flow_r) fr = pot.flow_r->at(x, y);
        q.at(x, y) = v - pot.theta_r * temporal_feature(Cell{x, y}, r1_star, fr);
      }
    std::vector<Grid2D<double>> w_branch;
    msg_root_to_part(q, pot.def, pot.anchor, pot.scale, pw, ph, &w_branch);
    Grid2D<std::int16_t> h_branch;
    const Grid2D<double> h = fold_branches(pot.u_p, w_branch, &h_branch);
    Grid2D<double> gmsg;
    Grid2D<Cell> garg;
    temporal_message_scatter(h, pot.theta_p, pot.flow_p, false, &gmsg, &garg);

    LoopAssignment c;
    c.r1 = r1_star;
    double cb = kNegInf;
    for (std::size_t b = 0; b < pot.u_p1.size(); ++b) {
      const Cell base{pot.scale * r1_star.x + pot.anchor[b].x,
                      pot.scale * r1_star.y + pot.anchor[b].y};
      for (int y = 0; y < ph; ++y)
        for (int x = 0; x < pw; ++x) {
          const double u = pot.u_p1[b].at(x, y);
          const double gm = gmsg.at(x, y);
          if (u == kNegInf || gm == kNegInf) continue;
          const double v = u - deformation_cost(pot.def[b], x - base.x, y - base.y) + gm;
          if (v > cb) {
            cb = v;
            c.branch1 = static_cast<int>(b);
            c.p1 = Cell{x, y};
          }
        }
    }
    if (c.branch1 < 0) return;
    c.p = garg.at(c.p1.x, c.p1.y);
    if (c.p.x < 0) return;
    c.branch = h_branch.at(c.p.x, c.p.y);
    if (c.branch < 0) return;
    Grid2D<double> wv;
    Grid2D<Cell> wa;
    dt_deform_from_source(q, pot.def[static_cast<std::size_t>(c.branch)], pot.scale,
                          pot.anchor[static_cast<std::size_t>(c.branch)], 0, pw, 0, ph, &wv, &wa);
    c.r = wa.at(c.p.x, c.p.y);
    consider(c);
  };

  for (const Cell& c : seeds_r) conditional_given_r(c);
  for (const Cell& c : top_cells(res.belief_r1, 3)) conditional_given_r1(c);
  return best;
}

namespace {

struct BranchSetup {
  int term_id = -1;
  double bias = 0.0;  // Or child bias + branch And bias
};

// A temporal part Or-node must expand into single-terminal branches that
// share the placement level, so the part position is well defined.
bool part_branch_setup(const AOGraph& g, const Node& part_or, std::vector<BranchSetup>* out,
                       int* sigma, std::string* why) {
  out->clear();
  *sigma = -1;
  for (std::size_t ci = 0; ci < part_or.children.size(); ++ci) {
    const Node& child = g.node(part_or.children[ci]);
    BranchSetup setup;
    setup.bias = part_or.child_bias[ci];
    if (child.is_terminal()) {
      setup.term_id = child.id;
    } else if (child.is_and() && child.children.size() == 1 &&
               g.node(child.children[0]).is_terminal()) {
      setup.term_id = child.children[0];
      setup.bias += child.bias;
    } else {
      *why = "part Or-node " + std::to_string(part_or.id) +
             " branch is not a single-terminal subtree";
      return false;
    }
    const Node& t = g.node(setup.term_id);
    if (*sigma < 0) *sigma = t.scale_factor;
    if (t.scale_factor != *sigma) {
      *why = "part Or-node " + std::to_string(part_or.id) + " mixes scale factors";
      return false;
    }
    out->push_back(setup);
  }
  return !out->empty();
}

}  // namespace

TemporalCoupling temporal_couple(const AOGraph& g, const FramePass& pass_i,
                                 const FramePass& pass_i1, const FlowPyramid& flow_i,
                                 const LbpConfig& cfg) {
  TemporalCoupling coupling;
  const int levels = pass_i.level_count();
  coupling.cars.resize(static_cast<std::size_t>(levels));

  for (const auto& car : g.nodes) {
    if (!car.is_and()) continue;
    std::vector<int> part_children;
    for (int child : car.children)
      if (g.node(child).is_or() && g.node(child).temporal) part_children.push_back(child);
    if (!car.temporal && part_children.empty()) continue;

    for (int level = 0; level < levels; ++level) {
      const auto& car_map_i =
          pass_i.nodes[static_cast<std::size_t>(level)][static_cast<std::size_t>(car.id)];
      const auto& car_map_i1 =
          pass_i1.nodes[static_cast<std::size_t>(level)][static_cast<std::size_t>(car.id)];
      if (car_map_i.score.empty() || car_map_i1.score.empty()) continue;
      const int rw = car_map_i.score.width();
      const int rh = car_map_i.score.height();

      CoupledCar coupled;
      coupled.car_id = car.id;
      coupled.level = level;
      coupled.value = Grid2D<double>(rw, rh, kNegInf);
      coupled.next_car = Grid2D<Cell>(rw, rh, Cell{-1, -1});

      const FlowGrid* flow_r =
          level < static_cast<int>(flow_i.levels.size()) ? &flow_i.levels[level] : nullptr;

      // Frame-(i+1) car placement conditioned on each frame-i cell.
      {
        Grid2D<double> val;
        Grid2D<Cell> arg;
        temporal_message_gather(car_map_i1.score, car.temporal ? car.temporal_weight : 0.0,
                                flow_r, false, &val, &arg);
        coupled.next_car = std::move(arg);
      }

      struct PartLoop {
        int part_or_id;
        int term_level;
        int sigma;
        std::vector<BranchSetup> branches;
        LoopPotentials pot;
        LoopResult result;
      };
      std::vector<PartLoop> loops;
      bool level_ok = true;

      for (int part_id : part_children) {
        const Node& part_or = g.node(part_id);
        PartLoop loop;
        loop.part_or_id = part_id;
        std::string why;
        if (!part_branch_setup(g, part_or, &loop.branches, &loop.sigma, &why))
          fail_invalid("temporal_couple: " + why);
        loop.term_level = level - loop.sigma * g.feature_spec.interval;
        if (loop.term_level < 0 || loop.term_level >= levels) {
          level_ok = false;
          break;
        }
        // Common part grid = full level grid; each branch's response is
        // embedded top-left with -inf outside its valid placements, so
        // differently sized templates share one position variable.
        const auto& part_grid =
            pass_i.pyramid->levels[static_cast<std::size_t>(loop.term_level)].features;
        const int pw = part_grid.width();
        const int ph = part_grid.height();
        for (const auto& br : loop.branches) {
          const auto& tm = pass_i.terms[static_cast<std::size_t>(loop.term_level)]
                                       [static_cast<std::size_t>(br.term_id)];
          const auto& tm1 = pass_i1.terms[static_cast<std::size_t>(loop.term_level)]
                                         [static_cast<std::size_t>(br.term_id)];
          if (!tm.ok || !tm1.ok) {
            level_ok = false;
            break;
          }
          const Node& t = g.node(br.term_id);
          Grid2D<double> u(pw, ph, kNegInf), u1(pw, ph, kNegInf);
          for (int y = 0; y < tm.response.height(); ++y)
            for (int x = 0; x < tm.response.width(); ++x)
              u.at(x, y) = tm.response.at(x, y) + br.bias;
          for (int y = 0; y < tm1.response.height(); ++y)
            for (int x = 0; x < tm1.response.width(); ++x)
              u1.at(x, y) = tm1.response.at(x, y) + br.bias;
          loop.pot.u_p.push_back(std::move(u));
          loop.pot.u_p1.push_back(std::move(u1));
          loop.pot.def.push_back(t.deformation);
          loop.pot.anchor.push_back(Cell{t.anchor_x, t.anchor_y});
        }
        if (!level_ok) break;

        // Other parts stay folded at their frame-pass optima inside phi_r.
        const auto& part_map_i =
            pass_i.nodes[static_cast<std::size_t>(level)][static_cast<std::size_t>(part_id)];
        const auto& part_map_i1 =
            pass_i1.nodes[static_cast<std::size_t>(level)][static_cast<std::size_t>(part_id)];
        loop.pot.phi_r = Grid2D<double>(rw, rh, kNegInf);
        loop.pot.phi_r1 = Grid2D<double>(rw, rh, kNegInf);
        for (int y = 0; y < rh; ++y)
          for (int x = 0; x < rw; ++x) {
            const double mi = car_map_i.score.at(x, y);
            const double pi = part_map_i.score.at(x, y);
            if (mi > kNegInf && pi > kNegInf) loop.pot.phi_r.at(x, y) = mi - pi;
            const double mi1 = car_map_i1.score.at(x, y);
            const double pi1 = part_map_i1.score.at(x, y);
            if (mi1 > kNegInf && pi1 > kNegInf) loop.pot.phi_r1.at(x, y) = mi1 - pi1;
          }
        loop.pot.scale = loop.sigma ? 2 : 1;
        loop.pot.theta_r = car.temporal ? car.temporal_weight : 0.0;
        loop.pot.theta_p = part_or.temporal_weight;
        loop.pot.flow_r = flow_r;
        loop.pot.flow_p = loop.term_level < static_cast<int>(flow_i.levels.size())
                              ? &flow_i.levels[static_cast<std::size_t>(loop.term_level)]
                              : nullptr;
        loops.push_back(std::move(loop));
      }

      if (!level_ok) continue;  // some template missing: this level stays uncoupled

      for (auto& loop : loops) {
        loop.result = loop_lbp(loop.pot, cfg);
        if (!loop.result.converged) coupled.converged = false;
        PartDecode dec;
        dec.part_or_id = loop.part_or_id;
        dec.term_level = loop.term_level;
        dec.branch = loop.result.arg_branch_p;
        dec.cell = loop.result.arg_cell_p;
        dec.next_cell = loop.result.arg_next_p;
        coupled.parts.push_back(std::move(dec));
      }
      if (!coupled.converged) coupling.converged = false;

      // Coupled value = evaluated pair score of the decoded parse per cell:
      // frame-i spatial score plus temporal penalties to the decoded
      // frame-(i+1) placements of the linked nodes.
      for (int y = 0; y < rh; ++y) {
        for (int x = 0; x < rw; ++x) {
          double acc = car.bias;
          bool ok = true;
          for (int child : car.children) {
            const Node& cn = g.node(child);
            if (cn.is_or() && cn.temporal) continue;  // handled via loops
            const double c = pass_i.child_contribution(child, level, x, y);
            if (c == kNegInf) {
              ok = false;
              break;
            }
            acc += c;
          }
          if (!ok) continue;
          for (std::size_t li = 0; li < loops.size(); ++li) {
            const auto& loop = loops[li];
            const int b = coupled.parts[li].branch.at(x, y);
            const Cell t = coupled.parts[li].cell.at(x, y);
            if (b < 0 || t.x < 0) {
              ok = false;
              break;
            }
            const double u = loop.pot.u_p[static_cast<std::size_t>(b)].at(t.x, t.y);
            const Cell base{loop.pot.scale * x + loop.pot.anchor[static_cast<std::size_t>(b)].x,
                            loop.pot.scale * y + loop.pot.anchor[static_cast<std::size_t>(b)].y};
            acc += u - deformation_cost(loop.pot.def[static_cast<std::size_t>(b)], t.x - base.x,
                                        t.y - base.y);
            if (loop.pot.theta_p > 0.0) {
              const Cell tn = coupled.parts[li].next_cell.at(t.x, t.y);
              if (tn.x >= 0) {
                Vec2f f{};
                if (loop.pot.flow_p) f = loop.pot.flow_p->at(t.x, t.y);
                acc -= loop.pot.theta_p * temporal_feature(t, tn, f);
              }
            }
          }
          if (!ok) continue;
          if (car.temporal && car.temporal_weight > 0.0) {
            const Cell rn = coupled.next_car.at(x, y);
            if (rn.x >= 0) {
              Vec2f f{};
              if (flow_r) f = flow_r->at(x, y);
              acc -= car.temporal_weight * temporal_feature(Cell{x, y}, rn, f);
            }
          }
          coupled.value.at(x, y) = acc;
        }
      }
      coupling.cars[static_cast<std::size_t>(level)].emplace(car.id, std::move(coupled));
    }
  }
  return coupling;
}

}  // namespace carfluents
