#include "learn/solver.hpp"

#include <cmath>
#include <limits>

#include "util/errors.hpp"

namespace carfluents {

namespace {

// Value and index of the most violating term; -1 when the hinge is inactive.
std::pair<double, int> group_hinge(const std::vector<double>& w, const HingeGroup& group) {
  double best = 0.0;
  int arg = -1;
  for (std::size_t j = 0; j < group.terms.size(); ++j) {
    const auto& term = group.terms[j];
    double dot = 0.0;
    for (std::size_t i = 0; i < w.size(); ++i) dot += w[i] * term.direction[i];
    const double v = term.margin + dot;
    if (v > best) {
      best = v;
      arg = static_cast<int>(j);
    }
  }
  return {best, arg};
}

}  // namespace

double hinge_objective(const std::vector<double>& w, const std::vector<HingeGroup>& groups,
                       double c) {
  double obj = 0.0;
  for (const double x : w) obj += 0.5 * x * x;
  for (const auto& g : groups) obj += c * group_hinge(w, g).first;
  return obj;
}

std::vector<double> hinge_subgradient(const std::vector<double>& w,
                                      const std::vector<HingeGroup>& groups, double c) {
  std::vector<double> grad = w;
  for (const auto& g : groups) {
    const auto [value, arg] = group_hinge(w, g);
    if (arg < 0) continue;
    const auto& dir = g.terms[static_cast<std::size_t>(arg)].direction;
    for (std::size_t i = 0; i < grad.size(); ++i) grad[i] += c * dir[i];
  }
  return grad;
}

SolverResult minimize_hinge(std::vector<double> w0, const std::vector<HingeGroup>& groups,
                            double c, const SolverConfig& cfg,
                            const std::function<void(std::vector<double>&)>& project) {
  for (const auto& g : groups)
    for (const auto& t : g.terms) {
      if (t.direction.size() != w0.size())
        fail_invalid("minimize_hinge: direction dimension mismatch");
      for (const double v : t.direction)
        if (!std::isfinite(v)) fail_invalid("minimize_hinge: non-finite feature");
    }

  SolverResult res;
  if (project) project(w0);
  res.weights = w0;
  res.objective = hinge_objective(res.weights, groups, c);

  // Deterministic dual coordinate ascent on the one-slack dual:
  //   max  sum a_gj * m_gj - 1/2 || sum a_gj d_gj ||^2
  //   s.t. a_gj >= 0,  sum_j a_gj <= C per group,
  // with w = -sum a_gj d_gj. The coordinate derivative is exactly the term's
  // violation m_gj + <w, d_gj>. The incumbent below only ever moves to a
  // strictly better projected primal point, so reported objectives are
  // monotone and never worse than the warm start.
  const std::size_t dim = res.weights.size();
  std::vector<double> w(dim, 0.0);
  std::vector<std::vector<double>> alpha(groups.size());
  std::vector<double> alpha_sum(groups.size(), 0.0);
  std::vector<std::vector<double>> norms(groups.size());
  for (std::size_t gi = 0; gi < groups.size(); ++gi) {
    alpha[gi].assign(groups[gi].terms.size(), 0.0);
    norms[gi].resize(groups[gi].terms.size());
    for (std::size_t j = 0; j < groups[gi].terms.size(); ++j) {
      double n = 0.0;
      for (const double v : groups[gi].terms[j].direction) n += v * v;
      norms[gi][j] = n;
    }
  }

  for (int sweep = 1; sweep <= cfg.max_epochs; ++sweep) {
    double max_step = 0.0;
    for (std::size_t gi = 0; gi < groups.size(); ++gi) {
      for (std::size_t j = 0; j < groups[gi].terms.size(); ++j) {
        const auto& term = groups[gi].terms[j];
        if (norms[gi][j] <= 0.0) continue;
        double dot = 0.0;
        for (std::size_t i = 0; i < dim; ++i) dot += w[i] * term.direction[i];
        double delta = (term.margin + dot) / norms[gi][j];
        const double lo = -alpha[gi][j];
        const double hi = c - alpha_sum[gi];
        delta = std::max(lo, std::min(delta, hi));
        if (delta == 0.0) continue;
        alpha[gi][j] += delta;
        alpha_sum[gi] += delta;
        for (std::size_t i = 0; i < dim; ++i) w[i] -= delta * term.direction[i];
        max_step = std::max(max_step, std::abs(delta) * std::sqrt(norms[gi][j]));
      }
    }
    res.epochs = sweep;
    if (sweep % 10 == 0 || max_step < 1e-10 * (1.0 + c)) {
      std::vector<double> cand = w;
      if (project) project(cand);
      const double obj = hinge_objective(cand, groups, c);
      if (obj < res.objective) {
        res.weights = cand;
        res.objective = obj;
      }
      if (max_step < 1e-10 * (1.0 + c)) break;
    }
  }
  {
    std::vector<double> cand = std::move(w);
    if (project) project(cand);
    const double obj = hinge_objective(cand, groups, c);
    if (obj < res.objective) {
      res.weights = std::move(cand);
      res.objective = obj;
    }
  }
  return res;
}

}  // namespace carfluents
