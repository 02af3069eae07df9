#pragma once

#include <vector>

namespace carfluents {

struct PcaModel {
  std::vector<double> mean;
  std::vector<std::vector<double>> basis;  // rows = principal directions, orthonormal

  std::vector<double> project(const std::vector<double>& x) const;
  int out_dim() const { return static_cast<int>(basis.size()); }
};

/// PCA via Jacobi eigendecomposition of the covariance matrix; keeps the
/// `dims` leading components (clamped to the input dimension).
PcaModel fit_pca(const std::vector<std::vector<double>>& points, int dims);

}  // namespace carfluents
