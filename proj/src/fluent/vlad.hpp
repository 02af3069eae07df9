#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "fluent/pca.hpp"

namespace carfluents {

struct Codebook {
  PcaModel pca;  // empty basis = no projection
  std::vector<std::vector<double>> centroids;

  int dim() const { return centroids.empty() ? 0 : static_cast<int>(centroids[0].size()); }
  std::vector<double> transform(const std::vector<double>& local) const;
};

/// PCA (to pca_dim, <= 0 disables) then seeded k-means for the centroids.
Codebook train_codebook(const std::vector<std::vector<double>>& locals, int k, int pca_dim,
                        std::uint64_t seed);

/// Nearest-centroid residual aggregation before any normalization.
std::vector<double> vlad_encode_raw(const std::vector<std::vector<double>>& locals,
                                    const Codebook& codebook);

/// Raw aggregation, then signed square root, then global L2.
/// All-zero residual vectors stay all-zero.
std::vector<double> vlad_encode(const std::vector<std::vector<double>>& locals,
                                const Codebook& codebook);

/// Concatenation with optional signed-sqrt + L2 renormalization.
std::vector<double> concat_descriptors(const std::vector<double>& a,
                                       const std::vector<double>& b, bool normalize);

void save_codebook(const Codebook& cb, const std::string& path);
Codebook load_codebook(const std::string& path);

}  // namespace carfluents
