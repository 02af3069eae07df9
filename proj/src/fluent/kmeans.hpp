#pragma once

#include <cstdint>
#include <vector>

namespace carfluents {

struct KMeansResult {
  std::vector<std::vector<double>> centroids;
  std::vector<int> assignment;
  double inertia = 0.0;
};

/// Seeded k-means++ initialization, Lloyd iterations until the relative
/// inertia change drops below 1e-6 or 100 iterations. Throws if there are
/// fewer points than clusters.
KMeansResult kmeans(const std::vector<std::vector<double>>& points, int k, std::uint64_t seed);

/// Elbow pick: smallest k whose inertia is under half the best smaller k's,
/// capped at max_k.
int elbow_k(const std::vector<std::vector<double>>& points, int max_k, std::uint64_t seed);

}  // namespace carfluents
