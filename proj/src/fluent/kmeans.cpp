#include "fluent/kmeans.hpp"

#include <cmath>
#include <limits>

#include "util/errors.hpp"
#include "util/rng.hpp"

namespace carfluents {

namespace {

double sq_dist(const std::vector<double>& a, const std::vector<double>& b) {
  double d = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double diff = a[i] - b[i];
    d += diff * diff;
  }
  return d;
}

}  // namespace

KMeansResult kmeans(const std::vector<std::vector<double>>& points, int k, std::uint64_t seed) {
  if (k < 1) fail_invalid("kmeans: k must be >= 1");
  if (static_cast<int>(points.size()) < k) fail_invalid("kmeans: fewer points than clusters");
  Rng rng(seed);

  KMeansResult res;
  // k-means++ seeding.
  res.centroids.push_back(points[static_cast<std::size_t>(rng.next_int(
      static_cast<int>(points.size())))]);
  std::vector<double> dist(points.size(), 0.0);
  while (static_cast<int>(res.centroids.size()) < k) {
    double total = 0.0;
    for (std::size_t i = 0; i < points.size(); ++i) {
      double best = std::numeric_limits<double>::infinity();
      for (const auto& c : res.centroids) best = std::min(best, sq_dist(points[i], c));
      dist[i] = best;
      total += best;
    }
    std::size_t pick = 0;
    if (total > 0.0) {
      double r = rng.next_double() * total;
      for (std::size_t i = 0; i < points.size(); ++i) {
        r -= dist[i];
        if (r <= 0.0) {
          pick = i;
          break;
        }
        pick = i;
      }
    } else {
      pick = static_cast<std::size_t>(rng.next_int(static_cast<int>(points.size())));
    }
    res.centroids.push_back(points[pick]);
  }

  res.assignment.assign(points.size(), 0);
  double prev_inertia = std::numeric_limits<double>::infinity();
  for (int iter = 0; iter < 100; ++iter) {
    res.inertia = 0.0;
    for (std::size_t i = 0; i < points.size(); ++i) {
      int best = 0;
      double bd = std::numeric_limits<double>::infinity();
      for (std::size_t c = 0; c < res.centroids.size(); ++c) {
        const double d = sq_dist(points[i], res.centroids[c]);
        if (d < bd) {
          bd = d;
          best = static_cast<int>(c);
        }
      }
      res.assignment[i] = best;
      res.inertia += bd;
    }
    // Update step.
    const std::size_t dim = points[0].size();
    std::vector<std::vector<double>> sums(static_cast<std::size_t>(k),
                                          std::vector<double>(dim, 0.0));
    std::vector<int> counts(static_cast<std::size_t>(k), 0);
    for (std::size_t i = 0; i < points.size(); ++i) {
      const auto c = static_cast<std::size_t>(res.assignment[i]);
      for (std::size_t d = 0; d < dim; ++d) sums[c][d] += points[i][d];
      counts[c] += 1;
    }
    for (std::size_t c = 0; c < static_cast<std::size_t>(k); ++c) {
      if (counts[c] == 0) continue;  // empty cluster keeps its centroid
      for (std::size_t d = 0; d < dim; ++d) res.centroids[c][d] = sums[c][d] / counts[c];
    }
    if (prev_inertia < std::numeric_limits<double>::infinity()) {
      const double rel = std::abs(prev_inertia - res.inertia) / std::max(1e-12, prev_inertia);
      if (rel < 1e-6) break;
    }
    prev_inertia = res.inertia;
  }
  return res;
}

int elbow_k(const std::vector<std::vector<double>>& points, int max_k, std::uint64_t seed) {
  const int cap = std::min<int>(max_k, static_cast<int>(points.size()));
  int best_k = 1;
  double best_inertia = kmeans(points, 1, seed).inertia;
  for (int k = 2; k <= cap; ++k) {
    const double inertia = kmeans(points, k, seed).inertia;
    if (inertia < 0.5 * best_inertia) {
      best_k = k;
      best_inertia = inertia;
    }
  }
  return best_k;
}

}  // namespace carfluents
