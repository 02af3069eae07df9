#include "fluent/pca.hpp"

#include <algorithm>
#include <cmath>

#include "util/errors.hpp"

namespace carfluents {

std::vector<double> PcaModel::project(const std::vector<double>& x) const {
  if (x.size() != mean.size()) fail_invalid("pca: dimension mismatch");
  std::vector<double> out(basis.size(), 0.0);
  for (std::size_t r = 0; r < basis.size(); ++r) {
    double acc = 0.0;
    for (std::size_t i = 0; i < mean.size(); ++i) acc += basis[r][i] * (x[i] - mean[i]);
    out[r] = acc;
  }
  return out;
}

PcaModel fit_pca(const std::vector<std::vector<double>>& points, int dims) {
  if (points.empty()) fail_invalid("pca: no points");
  const std::size_t d = points[0].size();
  dims = std::clamp<int>(dims, 1, static_cast<int>(d));

  PcaModel model;
  model.mean.assign(d, 0.0);
  for (const auto& p : points)
    for (std::size_t i = 0; i < d; ++i) model.mean[i] += p[i];
  for (auto& m : model.mean) m /= static_cast<double>(points.size());

  std::vector<std::vector<double>> cov(d, std::vector<double>(d, 0.0));
  for (const auto& p : points)
    for (std::size_t i = 0; i < d; ++i)
      for (std::size_t j = i; j < d; ++j)
        cov[i][j] += (p[i] - model.mean[i]) * (p[j] - model.mean[j]);
  for (std::size_t i = 0; i < d; ++i)
    for (std::size_t j = i; j < d; ++j) {
      cov[i][j] /= static_cast<double>(points.size());
      cov[j][i] = cov[i][j];
    }

  // Cyclic Jacobi.
  std::vector<std::vector<double>> v(d, std::vector<double>(d, 0.0));
  for (std::size_t i = 0; i < d; ++i) v[i][i] = 1.0;
  for (int sweep = 0; sweep < 60; ++sweep) {
    double off = 0.0;
    for (std::size_t p = 0; p < d; ++p)
      for (std::size_t q = p + 1; q < d; ++q) off += cov[p][q] * cov[p][q];
    if (off < 1e-20) break;
    for (std::size_t p = 0; p < d; ++p) {
      for (std::size_t q = p + 1; q < d; ++q) {
        if (std::abs(cov[p][q]) < 1e-18) continue;
        const double theta = 0.5 * (cov[q][q] - cov[p][p]) / cov[p][q];
        const double t = (theta >= 0 ? 1.0 : -1.0) /
                         (std::abs(theta) + std::sqrt(theta * theta + 1.0));
        const double c = 1.0 / std::sqrt(t * t + 1.0);
        const double s = t * c;
        for (std::size_t i = 0; i < d; ++i) {
          const double aip = cov[i][p];
          const double aiq = cov[i][q];
          cov[i][p] = c * aip - s * aiq;
          cov[i][q] = s * aip + c * aiq;
        }
        for (std::size_t i = 0; i < d; ++i) {
          const double api = cov[p][i];
          const double aqi = cov[q][i];
          cov[p][i] = c * api - s * aqi;
          cov[q][i] = s * api + c * aqi;
        }
        for (std::size_t i = 0; i < d; ++i) {
          const double vip = v[i][p];
          const double viq = v[i][q];
          v[i][p] = c * vip - s * viq;
          v[i][q] = s * vip + c * viq;
        }
      }
    }
  }

  std::vector<std::pair<double, std::size_t>> eig(d);
  for (std::size_t i = 0; i < d; ++i) eig[i] = {cov[i][i], i};
  std::sort(eig.begin(), eig.end(),
            [](const auto& a, const auto& b) { return a.first > b.first; });
  for (int r = 0; r < dims; ++r) {
    std::vector<double> dir(d);
    for (std::size_t i = 0; i < d; ++i) dir[i] = v[i][eig[static_cast<std::size_t>(r)].second];
    model.basis.push_back(std::move(dir));
  }
  return model;
}

}  // namespace carfluents
