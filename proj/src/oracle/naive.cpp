#include "oracle/naive.hpp"

#include <cmath>
#include <limits>

#include "util/errors.hpp"

namespace carfluents::oracle {

namespace {
constexpr double kNegInf = -std::numeric_limits<double>::infinity();
}

NaiveDt naive_distance_transform(const Grid2D<double>& in, const std::array<double, 4>& w) {
  NaiveDt out;
  out.value = Grid2D<double>(in.width(), in.height(), kNegInf);
  out.arg = Grid2D<Cell>(in.width(), in.height(), Cell{-1, -1});
  for (int y = 0; y < in.height(); ++y) {
    for (int x = 0; x < in.width(); ++x) {
      double best = kNegInf;
      Cell arg{-1, -1};
      for (int ys = 0; ys < in.height(); ++ys) {
        for (int xs = 0; xs < in.width(); ++xs) {
          const double src = in.at(xs, ys);
          if (!(src > kNegInf)) continue;
          const double dx = static_cast<double>(x - xs);
          const double dy = static_cast<double>(y - ys);
          double v = src - w[0] * dx - w[1] * (dx * dx);
          v = v - w[2] * dy - w[3] * (dy * dy);
          if (v > best) {
            best = v;
            arg = Cell{xs, ys};
          }
        }
      }
      out.value.at(x, y) = best;
      out.arg.at(x, y) = arg;
    }
  }
  return out;
}

Grid2D<double> naive_filter_response(const FeatureGrid& grid, const std::vector<double>& weights,
                                     int tw, int th) {
  const int ow = grid.width() - tw + 1;
  const int oh = grid.height() - th + 1;
  Grid2D<double> out(ow, oh, 0.0);
  for (int y = 0; y < oh; ++y)
    for (int x = 0; x < ow; ++x) {
      double acc = 0.0;
      std::size_t wi = 0;
      for (int wy = 0; wy < th; ++wy)
        for (int wx = 0; wx < tw; ++wx)
          for (int c = 0; c < grid.channels(); ++c)
            acc += weights[wi++] * grid.at(x + wx, y + wy, c);
      out.at(x, y) = acc;
    }
  return out;
}

namespace {

// Response cache so the enumeration stays honest but affordable.
struct RespCache {
  const AOGraph& g;
  const FeaturePyramid& pyr;
  std::vector<std::vector<Grid2D<double>>> resp;  // [level][node]

  RespCache(const AOGraph& graph, const FeaturePyramid& pyramid) : g(graph), pyr(pyramid) {
    resp.assign(static_cast<std::size_t>(pyr.level_count()), {});
    for (auto& lv : resp) lv.resize(g.nodes.size());
  }

  const Grid2D<double>* get(int terminal, int level) {
    if (level < 0 || level >= pyr.level_count()) return nullptr;
    const Node& t = g.node(terminal);
    const auto& grid = pyr.levels[static_cast<std::size_t>(level)].features;
    if (t.tw > grid.width() || t.th > grid.height()) return nullptr;
    auto& slot = resp[static_cast<std::size_t>(level)][static_cast<std::size_t>(terminal)];
    if (slot.empty())
      slot = naive_filter_response(grid, t.appearance, t.tw, t.th);
    return &slot;
  }
};

double naive_node_score(RespCache& cache, int node_id, int level, Cell cell);

double naive_child_score(RespCache& cache, int child_id, int level, Cell cell) {
  const AOGraph& g = cache.g;
  const Node& child = g.node(child_id);
  if (!child.is_terminal()) return naive_node_score(cache, child_id, level, cell);
  const int tl = level - child.scale_factor * g.feature_spec.interval;
  const Grid2D<double>* resp = cache.get(child_id, tl);
  if (!resp) return kNegInf;
  const int bx = (child.scale_factor ? 2 * cell.x : cell.x) + child.anchor_x;
  const int by = (child.scale_factor ? 2 * cell.y : cell.y) + child.anchor_y;
  double best = kNegInf;
  for (int ty = 0; ty < resp->height(); ++ty) {
    for (int tx = 0; tx < resp->width(); ++tx) {
      const double dx = static_cast<double>(tx - bx);
      const double dy = static_cast<double>(ty - by);
      double v = resp->at(tx, ty) - child.deformation[0] * dx -
                 child.deformation[1] * (dx * dx);
      v = v - child.deformation[2] * dy - child.deformation[3] * (dy * dy);
      if (v > best) best = v;
    }
  }
  return best;
}

double naive_node_score(RespCache& cache, int node_id, int level, Cell cell) {
  const Node& n = cache.g.node(node_id);
  if (n.is_and()) {
    double acc = n.bias;
    for (int child : n.children) {
      const double c = naive_child_score(cache, child, level, cell);
      if (!(c > kNegInf)) return kNegInf;
      acc += c;
    }
    return acc;
  }
  double best = kNegInf;
  for (std::size_t ci = 0; ci < n.children.size(); ++ci) {
    const double c = naive_child_score(cache, n.children[ci], level, cell);
    if (!(c > kNegInf)) continue;
    const double v = c + n.child_bias[ci];
    if (v > best) best = v;
  }
  return best;
}

}  // namespace

double naive_cell_score(const AOGraph& g, const FeaturePyramid& pyr, int level, Cell cell) {
  RespCache cache(g, pyr);
  return naive_node_score(cache, g.root, level, cell);
}

NaiveParse naive_best_parse(const AOGraph& g, const FeaturePyramid& pyr) {
  RespCache cache(g, pyr);
  NaiveParse best{kNegInf, -1, Cell{-1, -1}};
  for (int level = 0; level < pyr.level_count(); ++level) {
    const auto& grid = pyr.levels[static_cast<std::size_t>(level)].features;
    for (int y = 0; y < grid.height(); ++y) {
      for (int x = 0; x < grid.width(); ++x) {
        const double s = naive_node_score(cache, g.root, level, Cell{x, y});
        if (s > best.score) best = NaiveParse{s, level, Cell{x, y}};
      }
    }
  }
  return best;
}

NaiveLoopOpt naive_loop_optimum(const LoopPotentials& pot) {
  const int rw = pot.phi_r.width();
  const int rh = pot.phi_r.height();
  const int pw = pot.u_p[0].width();
  const int ph = pot.u_p[0].height();
  const int nb = pot.branches();

  auto def_cost = [&](int b, int dx, int dy) {
    const auto& w = pot.def[static_cast<std::size_t>(b)];
    return w[0] * dx + w[1] * (static_cast<double>(dx) * dx) + w[2] * dy +
           w[3] * (static_cast<double>(dy) * dy);
  };

  // Best (p~, b~) for every (p, r~): inner table to keep this O(G^3).
  // temporal p-p~ uses flow at the frame-i part cell.
  const int pstates = pw * ph * nb;
  const int rstates = rw * rh;
  std::vector<double> table(static_cast<std::size_t>(pw * ph) * rstates, kNegInf);
  for (int py = 0; py < ph; ++py) {
    for (int px = 0; px < pw; ++px) {
      Vec2f f{};
      if (pot.flow_p) f = pot.flow_p->at(px, py);
      for (int ry = 0; ry < rh; ++ry) {
        for (int rx = 0; rx < rw; ++rx) {
          double best = kNegInf;
          for (int b1 = 0; b1 < nb; ++b1) {
            const int bx = pot.scale * rx + pot.anchor[static_cast<std::size_t>(b1)].x;
            const int by = pot.scale * ry + pot.anchor[static_cast<std::size_t>(b1)].y;
            for (int qy = 0; qy < ph; ++qy) {
              for (int qx = 0; qx < pw; ++qx) {
                const double u = pot.u_p1[static_cast<std::size_t>(b1)].at(qx, qy);
                if (!(u > kNegInf)) continue;
                const double ddx = px - qx + f.u;
                const double ddy = py - qy + f.v;
                const double v = u - def_cost(b1, qx - bx, qy - by) -
                                 pot.theta_p * (ddx * ddx + ddy * ddy);
                if (v > best) best = v;
              }
            }
          }
          table[(static_cast<std::size_t>(py) * pw + px) * rstates + ry * rw + rx] = best;
        }
      }
    }
  }
  (void)pstates;

  NaiveLoopOpt out;
  out.score = kNegInf;
  for (int ry = 0; ry < rh; ++ry) {
    for (int rx = 0; rx < rw; ++rx) {
      const double phir = pot.phi_r.at(rx, ry);
      if (!(phir > kNegInf)) continue;
      Vec2f fr{};
      if (pot.flow_r) fr = pot.flow_r->at(rx, ry);
      for (int ry1 = 0; ry1 < rh; ++ry1) {
        for (int rx1 = 0; rx1 < rw; ++rx1) {
          const double phir1 = pot.phi_r1.at(rx1, ry1);
          if (!(phir1 > kNegInf)) continue;
          const double drx = rx - rx1 + fr.u;
          const double dry = ry - ry1 + fr.v;
          const double base_score =
              phir + phir1 - pot.theta_r * (drx * drx + dry * dry);
          for (int b = 0; b < nb; ++b) {
            const int bx = pot.scale * rx + pot.anchor[static_cast<std::size_t>(b)].x;
            const int by = pot.scale * ry + pot.anchor[static_cast<std::size_t>(b)].y;
            for (int py = 0; py < ph; ++py) {
              for (int px = 0; px < pw; ++px) {
                const double u = pot.u_p[static_cast<std::size_t>(b)].at(px, py);
                if (!(u > kNegInf)) continue;
                const double v =
                    base_score + u - def_cost(b, px - bx, py - by) +
                    table[(static_cast<std::size_t>(py) * pw + px) * rstates + ry1 * rw + rx1];
                if (v > out.score) {
                  out.score = v;
                  out.assignment.r = Cell{rx, ry};
                  out.assignment.r1 = Cell{rx1, ry1};
                  out.assignment.p = Cell{px, py};
                  out.assignment.branch = b;
                }
              }
            }
          }
        }
      }
    }
  }
  return out;
}

NaivePath naive_best_path(const std::vector<std::vector<TrackProposal>>& per_frame,
                          const std::array<double, 6>& theta, double lambda) {
  const std::size_t n = per_frame.size();
  std::vector<int> path(n, 0);
  NaivePath best{kNegInf, {}};

  auto edge = [&](const TrackProposal& a, const TrackProposal& b) {
    const double sa = std::sqrt(a.box.w * a.box.h);
    const double sb = std::sqrt(b.box.w * b.box.h);
    const double dx = ((b.box.x + 0.5 * b.box.w) - (a.box.x + 0.5 * a.box.w)) / sa;
    const double dy = ((b.box.y + 0.5 * b.box.h) - (a.box.y + 0.5 * a.box.h)) / sa;
    const double ds = std::log(sb / sa);
    double s = theta[0] * dx - theta[1] * dx * dx + theta[2] * dy - theta[3] * dy * dy +
               theta[4] * ds - theta[5] * ds * ds;
    const double ix = std::min(a.box.x + a.box.w, b.box.x + b.box.w) - std::max(a.box.x, b.box.x);
    const double iy = std::min(a.box.y + a.box.h, b.box.y + b.box.h) - std::max(a.box.y, b.box.y);
    if (ix > 0 && iy > 0) {
      const double inter = ix * iy;
      s += lambda * inter / (a.box.w * a.box.h + b.box.w * b.box.h - inter);
    }
    return s;
  };

  while (true) {
    double score = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      score += per_frame[i][static_cast<std::size_t>(path[i])].unary;
      if (i > 0)
        score += edge(per_frame[i - 1][static_cast<std::size_t>(path[i - 1])],
                      per_frame[i][static_cast<std::size_t>(path[i])]);
    }
    if (score > best.score) {
      best.score = score;
      best.path = path;
    }
    // next path, lexicographic
    std::size_t i = n;
    while (i-- > 0) {
      if (++path[i] < static_cast<int>(per_frame[i].size())) break;
      path[i] = 0;
      if (i == 0) return best;
    }
  }
}

std::vector<double> naive_vlad_raw(const std::vector<std::vector<double>>& locals,
                                   const std::vector<std::vector<double>>& centroids) {
  const std::size_t k = centroids.size();
  const std::size_t d = centroids.empty() ? 0 : centroids[0].size();
  std::vector<double> out(k * d, 0.0);
  for (const auto& x : locals) {
    std::size_t best = 0;
    double bd = std::numeric_limits<double>::infinity();
    for (std::size_t c = 0; c < k; ++c) {
      double dist = 0.0;
      for (std::size_t i = 0; i < d; ++i) {
        const double diff = x[i] - centroids[c][i];
        dist += diff * diff;
      }
      if (dist < bd) {
        bd = dist;
        best = c;
      }
    }
    for (std::size_t i = 0; i < d; ++i) out[best * d + i] += x[i] - centroids[best][i];
  }
  return out;
}

}  // namespace carfluents::oracle
