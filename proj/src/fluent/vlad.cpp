#include "fluent/vlad.hpp"

#include <cmath>
#include <fstream>
#include <limits>

#include "fluent/kmeans.hpp"
#include "json.hpp"
#include "util/errors.hpp"

namespace carfluents {

std::vector<double> Codebook::transform(const std::vector<double>& local) const {
  if (pca.basis.empty()) return local;
  return pca.project(local);
}

Codebook train_codebook(const std::vector<std::vector<double>>& locals, int k, int pca_dim,
                        std::uint64_t seed) {
  if (locals.empty()) fail_invalid("train_codebook: no descriptors");
  Codebook cb;
  std::vector<std::vector<double>> projected;
  if (pca_dim > 0) {
    cb.pca = fit_pca(locals, pca_dim);
    projected.reserve(locals.size());
    for (const auto& x : locals) projected.push_back(cb.pca.project(x));
  } else {
    projected = locals;
  }
  cb.centroids = kmeans(projected, k, seed).centroids;
  return cb;
}

std::vector<double> vlad_encode_raw(const std::vector<std::vector<double>>& locals,
                                    const Codebook& codebook) {
  const std::size_t k = codebook.centroids.size();
  if (k == 0) fail_invalid("vlad_encode: empty codebook");
  const std::size_t d = codebook.centroids[0].size();
  std::vector<double> out(k * d, 0.0);
  for (const auto& raw : locals) {
    const std::vector<double> x = codebook.transform(raw);
    if (x.size() != d) fail_invalid("vlad_encode: descriptor dimension mismatch");
    std::size_t best = 0;
    double bd = std::numeric_limits<double>::infinity();
    for (std::size_t c = 0; c < k; ++c) {
      double dist = 0.0;
      for (std::size_t i = 0; i < d; ++i) {
        const double diff = x[i] - codebook.centroids[c][i];
        dist += diff * diff;
      }
      if (dist < bd) {
        bd = dist;
        best = c;
      }
    }
    for (std::size_t i = 0; i < d; ++i) out[best * d + i] += x[i] - codebook.centroids[best][i];
  }
  return out;
}

std::vector<double> vlad_encode(const std::vector<std::vector<double>>& locals,
                                const Codebook& codebook) {
  std::vector<double> out = vlad_encode_raw(locals, codebook);
  // Signed square root, then global L2 (skip the division when empty).
  double norm2 = 0.0;
  for (auto& v : out) {
    v = (v >= 0.0 ? 1.0 : -1.0) * std::sqrt(std::abs(v));
    norm2 += v * v;
  }
  if (norm2 > 0.0) {
    const double inv = 1.0 / std::sqrt(norm2);
    for (auto& v : out) v *= inv;
  }
  return out;
}

std::vector<double> concat_descriptors(const std::vector<double>& a,
                                       const std::vector<double>& b, bool normalize) {
  std::vector<double> out;
  out.reserve(a.size() + b.size());
  out.insert(out.end(), a.begin(), a.end());
  out.insert(out.end(), b.begin(), b.end());
  if (normalize) {
    double norm2 = 0.0;
    for (auto& v : out) {
      v = (v >= 0.0 ? 1.0 : -1.0) * std::sqrt(std::abs(v));
      norm2 += v * v;
    }
    if (norm2 > 0.0) {
      const double inv = 1.0 / std::sqrt(norm2);
      for (auto& v : out) v *= inv;
    }
  }
  return out;
}

void save_codebook(const Codebook& cb, const std::string& path) {
  nlohmann::json doc;
  doc["pca_mean"] = cb.pca.mean;
  doc["pca_basis"] = cb.pca.basis;
  doc["centroids"] = cb.centroids;
  std::ofstream out(path);
  if (!out) fail_io("cannot write " + path);
  out << doc.dump() << "\n";
}

Codebook load_codebook(const std::string& path) {
  std::ifstream in(path);
  if (!in) fail_io("cannot open " + path);
  nlohmann::json doc;
  try {
    doc = nlohmann::json::parse(in);
    Codebook cb;
    cb.pca.mean = doc.at("pca_mean").get<std::vector<double>>();
    cb.pca.basis = doc.at("pca_basis").get<std::vector<std::vector<double>>>();
    cb.centroids = doc.at("centroids").get<std::vector<std::vector<double>>>();
    return cb;
  } catch (const nlohmann::json::exception& e) {
    fail_parse(path + ": " + e.what());
  }
}

}  // namespace carfluents
