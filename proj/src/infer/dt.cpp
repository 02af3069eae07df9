#include "infer/dt.hpp"

#include <cmath>
#include <limits>

#include "util/errors.hpp"

namespace carfluents {

namespace {

constexpr double kNegInf = -std::numeric_limits<double>::infinity();

// Each source is a line in query space once the common -w2*q^2 term is
// dropped: a_i + b_i*q with a_i = val_i + w1*p_i - w2*p_i^2 and
// b_i = 2*w2*p_i - w1. Slopes are strictly increasing in p_i, so a monotone
// convex-hull sweep yields the upper envelope in O(n + q).
struct EnvelopeLine {
  double a;
  double b;
  int src;
};

inline double line_at(const EnvelopeLine& l, double q) { return l.a + l.b * q; }

// Exact per-query value, written the same way the naive scan writes it.
inline double exact_value(double val, int p, double w1, double w2, int q) {
  const double d = static_cast<double>(q - p);
  return val - w1 * d - w2 * (d * d);
}

}  // namespace

void dt_envelope_1d(std::span<const double> val, std::span<const int> pos, double w1, double w2,
                    int q_start, int n_query, std::span<double> out_val,
                    std::span<int> out_arg) {
  if (w2 <= 0.0) fail_invalid("dt_envelope_1d: quadratic weight must be > 0");
  if (val.size() != pos.size()) fail_invalid("dt_envelope_1d: val/pos size mismatch");

  std::vector<EnvelopeLine> hull;
  hull.reserve(val.size());
  for (std::size_t i = 0; i < val.size(); ++i) {
    if (!(val[i] > kNegInf)) continue;  // masked (also drops NaN)
    const double p = static_cast<double>(pos[i]);
    EnvelopeLine line{val[i] + w1 * p - w2 * p * p, 2.0 * w2 * p - w1, static_cast<int>(i)};
    // Pop lines that leave the upper envelope.
    while (hull.size() >= 2) {
      const EnvelopeLine& l1 = hull[hull.size() - 2];
      const EnvelopeLine& l2 = hull.back();
      // l2 is dominated once the new line overtakes it no later than l2
      // overtook l1: (a - a1)/(b1 - b) <= (a2 - a1)/(b1 - b2).
      const double lhs = (line.a - l1.a) * (l1.b - l2.b);
      const double rhs = (l2.a - l1.a) * (l1.b - line.b);
      if (lhs <= rhs)
        hull.pop_back();
      else
        break;
    }
    if (hull.size() == 1 && hull.back().b == line.b) {
      // Equal slopes cannot happen for distinct positions; guard anyway.
      if (line.a >= hull.back().a) hull.pop_back();
    }
    hull.push_back(line);
  }

  if (hull.empty()) {
    for (int q = 0; q < n_query; ++q) {
      out_val[q] = kNegInf;
      out_arg[q] = -1;
    }
    return;
  }

  std::size_t j = 0;
  for (int q = 0; q < n_query; ++q) {
    const double qq = static_cast<double>(q_start + q);
    while (j + 1 < hull.size() && line_at(hull[j + 1], qq) >= line_at(hull[j], qq)) ++j;
    const int src = hull[j].src;
    out_val[q] = exact_value(val[src], pos[src], w1, w2, q_start + q);
    out_arg[q] = src;
  }
}

DtResult distance_transform(const Grid2D<double>& input, const std::array<double, 4>& weights) {
  if (weights[1] <= 0.0 || weights[3] <= 0.0)
    fail_invalid("distance_transform: quadratic weights must be > 0");
  const int w = input.width();
  const int h = input.height();

  DtResult res;
  res.value = Grid2D<double>(w, h, kNegInf);
  res.arg = Grid2D<Cell>(w, h, Cell{-1, -1});

  std::vector<int> positions(static_cast<std::size_t>(std::max(w, h)));
  for (int i = 0; i < std::max(w, h); ++i) positions[i] = i;

  // Pass 1: rows. tmp(x, y) = max over x' of in(x', y) - cost_x.
  Grid2D<double> tmp(w, h, kNegInf);
  Grid2D<int> tmp_argx(w, h, -1);
  std::vector<double> line(static_cast<std::size_t>(std::max(w, h)));
  std::vector<double> out_val(static_cast<std::size_t>(std::max(w, h)));
  std::vector<int> out_arg(static_cast<std::size_t>(std::max(w, h)));
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) line[x] = input.at(x, y);
    dt_envelope_1d({line.data(), static_cast<std::size_t>(w)},
                   {positions.data(), static_cast<std::size_t>(w)}, weights[0], weights[1], 0, w,
                   {out_val.data(), static_cast<std::size_t>(w)},
                   {out_arg.data(), static_cast<std::size_t>(w)});
    for (int x = 0; x < w; ++x) {
      tmp.at(x, y) = out_val[x];
      tmp_argx.at(x, y) = out_arg[x];
    }
  }

  // Pass 2: columns over the row results.
  for (int x = 0; x < w; ++x) {
    for (int y = 0; y < h; ++y) line[y] = tmp.at(x, y);
    dt_envelope_1d({line.data(), static_cast<std::size_t>(h)},
                   {positions.data(), static_cast<std::size_t>(h)}, weights[2], weights[3], 0, h,
                   {out_val.data(), static_cast<std::size_t>(h)},
                   {out_arg.data(), static_cast<std::size_t>(h)});
    for (int y = 0; y < h; ++y) {
      const int ys = out_arg[y];
      if (ys < 0) continue;
      const int xs = tmp_argx.at(x, ys);
      if (xs < 0) continue;
      res.value.at(x, y) = out_val[y];
      res.arg.at(x, y) = Cell{xs, ys};
    }
  }
  return res;
}

void dt_deform_to_query(const Grid2D<double>& in, const std::array<double, 4>& w, int qx0,
                        int qx_len, int qy0, int qy_len, Grid2D<double>* val, Grid2D<Cell>* arg) {
  if (w[1] <= 0.0 || w[3] <= 0.0)
    fail_invalid("dt_deform_to_query: quadratic weights must be > 0");
  const int sw = in.width();
  const int sh = in.height();
  std::vector<int> positions(static_cast<std::size_t>(std::max(sw, sh)));
  for (int i = 0; i < std::max(sw, sh); ++i) positions[i] = i;

  // Cost uses (t - q); the envelope works in (q - t), so the linear weight
  // flips sign while the quadratic is unchanged.
  Grid2D<double> rows(qx_len, sh, kNegInf);
  Grid2D<int> rows_arg(qx_len, sh, -1);
  std::vector<double> line(static_cast<std::size_t>(std::max(sw, sh)));
  std::vector<double> ov(static_cast<std::size_t>(std::max(qx_len, qy_len)));
  std::vector<int> oa(static_cast<std::size_t>(std::max(qx_len, qy_len)));
  for (int y = 0; y < sh; ++y) {
    for (int x = 0; x < sw; ++x) line[x] = in.at(x, y);
    dt_envelope_1d({line.data(), static_cast<std::size_t>(sw)},
                   {positions.data(), static_cast<std::size_t>(sw)}, -w[0], w[1], qx0, qx_len,
                   {ov.data(), static_cast<std::size_t>(qx_len)},
                   {oa.data(), static_cast<std::size_t>(qx_len)});
    for (int q = 0; q < qx_len; ++q) {
      rows.at(q, y) = ov[q];
      rows_arg.at(q, y) = oa[q];
    }
  }
  *val = Grid2D<double>(qx_len, qy_len, kNegInf);
  *arg = Grid2D<Cell>(qx_len, qy_len, Cell{-1, -1});
  for (int q = 0; q < qx_len; ++q) {
    for (int y = 0; y < sh; ++y) line[y] = rows.at(q, y);
    dt_envelope_1d({line.data(), static_cast<std::size_t>(sh)},
                   {positions.data(), static_cast<std::size_t>(sh)}, -w[2], w[3], qy0, qy_len,
                   {ov.data(), static_cast<std::size_t>(qy_len)},
                   {oa.data(), static_cast<std::size_t>(qy_len)});
    for (int qy = 0; qy < qy_len; ++qy) {
      const int ys = oa[qy];
      if (ys < 0) continue;
      const int xs = rows_arg.at(q, ys);
      if (xs < 0) continue;
      val->at(q, qy) = ov[qy];
      arg->at(q, qy) = Cell{xs, ys};
    }
  }
}

void dt_deform_from_source(const Grid2D<double>& in, const std::array<double, 4>& w, int scale,
                           Cell anchor, int qx0, int qx_len, int qy0, int qy_len,
                           Grid2D<double>* val, Grid2D<Cell>* arg) {
  if (w[1] <= 0.0 || w[3] <= 0.0)
    fail_invalid("dt_deform_from_source: quadratic weights must be > 0");
  const int sw = in.width();
  const int sh = in.height();
  std::vector<int> pos_x(static_cast<std::size_t>(sw)), pos_y(static_cast<std::size_t>(sh));
  for (int i = 0; i < sw; ++i) pos_x[i] = scale * i + anchor.x;
  for (int i = 0; i < sh; ++i) pos_y[i] = scale * i + anchor.y;

  Grid2D<double> rows(qx_len, sh, kNegInf);
  Grid2D<int> rows_arg(qx_len, sh, -1);
  std::vector<double> line(static_cast<std::size_t>(std::max(sw, sh)));
  std::vector<double> ov(static_cast<std::size_t>(std::max(qx_len, qy_len)));
  std::vector<int> oa(static_cast<std::size_t>(std::max(qx_len, qy_len)));
  for (int y = 0; y < sh; ++y) {
    for (int x = 0; x < sw; ++x) line[x] = in.at(x, y);
    dt_envelope_1d({line.data(), static_cast<std::size_t>(sw)},
                   {pos_x.data(), static_cast<std::size_t>(sw)}, w[0], w[1], qx0, qx_len,
                   {ov.data(), static_cast<std::size_t>(qx_len)},
                   {oa.data(), static_cast<std::size_t>(qx_len)});
    for (int q = 0; q < qx_len; ++q) {
      rows.at(q, y) = ov[q];
      rows_arg.at(q, y) = oa[q];
    }
  }
  *val = Grid2D<double>(qx_len, qy_len, kNegInf);
  *arg = Grid2D<Cell>(qx_len, qy_len, Cell{-1, -1});
  for (int q = 0; q < qx_len; ++q) {
    for (int y = 0; y < sh; ++y) line[y] = rows.at(q, y);
    dt_envelope_1d({line.data(), static_cast<std::size_t>(sh)},
                   {pos_y.data(), static_cast<std::size_t>(sh)}, w[2], w[3], qy0, qy_len,
                   {ov.data(), static_cast<std::size_t>(qy_len)},
                   {oa.data(), static_cast<std::size_t>(qy_len)});
    for (int qy = 0; qy < qy_len; ++qy) {
      const int ys = oa[qy];
      if (ys < 0) continue;
      const int xs = rows_arg.at(q, ys);
      if (xs < 0) continue;
      val->at(q, qy) = ov[qy];
      arg->at(q, qy) = Cell{xs, ys};
    }
  }
}

namespace {

void normalize_message(Grid2D<double>* val) {
  double best = kNegInf;
  for (int y = 0; y < val->height(); ++y)
    for (int x = 0; x < val->width(); ++x) best = std::max(best, val->at(x, y));
  if (!(best > kNegInf)) return;
  for (int y = 0; y < val->height(); ++y)
    for (int x = 0; x < val->width(); ++x) val->at(x, y) -= best;
}

Cell global_argmax(const Grid2D<double>& h) {
  Cell best{-1, -1};
  double bv = kNegInf;
  for (int y = 0; y < h.height(); ++y)
    for (int x = 0; x < h.width(); ++x)
      if (h.at(x, y) > bv) {
        bv = h.at(x, y);
        best = Cell{x, y};
      }
  return best;
}

}  // namespace

void temporal_message_gather(const Grid2D<double>& h, double theta, const FlowGrid* flow,
                             bool normalize, Grid2D<double>* val, Grid2D<Cell>* arg) {
  const int w = h.width();
  const int hh = h.height();
  if (theta == 0.0) {
    *val = Grid2D<double>(w, hh, 0.0);
    *arg = Grid2D<Cell>(w, hh, global_argmax(h));
    return;
  }
  const DtResult dt = distance_transform(h, {0.0, theta, 0.0, theta});
  *val = Grid2D<double>(w, hh, kNegInf);
  *arg = Grid2D<Cell>(w, hh, Cell{-1, -1});
  for (int y = 0; y < hh; ++y) {
    for (int x = 0; x < w; ++x) {
      int qx = x, qy = y;
      if (flow) {
        const Vec2f f = flow->at(x, y);
        qx = std::clamp(x + static_cast<int>(std::lround(f.u)), 0, w - 1);
        qy = std::clamp(y + static_cast<int>(std::lround(f.v)), 0, hh - 1);
      }
      val->at(x, y) = dt.value.at(qx, qy);
      arg->at(x, y) = dt.arg.at(qx, qy);
    }
  }
  if (normalize) normalize_message(val);
}

void temporal_message_scatter(const Grid2D<double>& h, double theta, const FlowGrid* flow,
                              bool normalize, Grid2D<double>* val, Grid2D<Cell>* arg) {
  const int w = h.width();
  const int hh = h.height();
  if (theta == 0.0) {
    *val = Grid2D<double>(w, hh, 0.0);
    *arg = Grid2D<Cell>(w, hh, global_argmax(h));
    return;
  }
  Grid2D<double> shifted = h;
  Grid2D<Cell> origin(w, hh);
  if (flow) {
    shifted = scatter_shift_max(h, *flow, &origin);
  } else {
    for (int y = 0; y < hh; ++y)
      for (int x = 0; x < w; ++x) origin.at(x, y) = Cell{x, y};
  }
  const DtResult dt = distance_transform(shifted, {0.0, theta, 0.0, theta});
  *val = dt.value;
  *arg = Grid2D<Cell>(w, hh, Cell{-1, -1});
  for (int y = 0; y < hh; ++y) {
    for (int x = 0; x < w; ++x) {
      const Cell c = dt.arg.at(x, y);
      if (c.x >= 0) arg->at(x, y) = origin.at(c.x, c.y);
    }
  }
  if (normalize) normalize_message(val);
}

Grid2D<double> scatter_shift_max(const Grid2D<double>& input, const FlowGrid& shift,
                                 Grid2D<Cell>* origin) {
  if (input.width() != shift.width() || input.height() != shift.height())
    fail_invalid("scatter_shift_max: grid/shift size mismatch");
  Grid2D<double> out(input.width(), input.height(), kNegInf);
  if (origin) *origin = Grid2D<Cell>(input.width(), input.height(), Cell{-1, -1});
  for (int y = 0; y < input.height(); ++y) {
    for (int x = 0; x < input.width(); ++x) {
      const double v = input.at(x, y);
      if (!(v > kNegInf)) continue;
      const Vec2f f = shift.at(x, y);
      const int tx = x + static_cast<int>(std::lround(f.u));
      const int ty = y + static_cast<int>(std::lround(f.v));
      if (!out.in_bounds(tx, ty)) continue;
      if (v > out.at(tx, ty)) {
        out.at(tx, ty) = v;
        if (origin) origin->at(tx, ty) = Cell{x, y};
      }
    }
  }
  return out;
}

}  // namespace carfluents
