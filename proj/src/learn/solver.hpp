#pragma once

#include <cstdint>
#include <functional>
#include <vector>

namespace carfluents {

/// One hinge term: max(0, margin + <w, direction>). A group takes the max
/// over its terms before the hinge, giving the structural one-slack form;
/// binary classification uses single-term groups.
struct HingeTerm {
  std::vector<double> direction;
  double margin = 0.0;
};

struct HingeGroup {
  std::vector<HingeTerm> terms;
};

struct SolverConfig {
  int max_epochs = 300;
  double lambda_reg = 1.0;  // step schedule 1/(lambda_reg * t)
  double tol = 1e-10;       // relative objective change stop
  std::uint64_t seed = 7;   // recorded for reproducibility
};

struct SolverResult {
  std::vector<double> weights;
  double objective = 0.0;
  int epochs = 0;
};

double hinge_objective(const std::vector<double>& w, const std::vector<HingeGroup>& groups,
                       double c);

/// Subgradient of the objective at w (regularizer + active group terms).
std::vector<double> hinge_subgradient(const std::vector<double>& w,
                                      const std::vector<HingeGroup>& groups, double c);

/// Minimizes 1/2 ||w||^2 + C * sum over groups of the group hinge by
/// deterministic dual coordinate ascent (one-slack dual, fixed sweep order).
/// The returned weights are the best projected primal iterate encountered,
/// never worse than the (projected) warm start, so successive calls report
/// non-increasing objectives on a fixed working set.
SolverResult minimize_hinge(std::vector<double> w0, const std::vector<HingeGroup>& groups,
                            double c, const SolverConfig& cfg,
                            const std::function<void(std::vector<double>&)>& project = nullptr);

}  // namespace carfluents
