#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "util/grid.hpp"

namespace carfluents {

struct FluentModel {
  std::vector<std::string> labels;
  std::vector<std::vector<double>> weights;  // per class, over descriptor dims
  std::vector<double> bias;                  // per class
};

/// One-against-rest linear hinge classifiers (shared seeded solver).
/// Throws when fewer than two classes are present.
FluentModel train_fluent(const std::vector<std::vector<double>>& descriptors,
                         const std::vector<int>& labels,
                         const std::vector<std::string>& label_names, double c,
                         std::uint64_t seed);

/// Argmax class (ties to the lowest index) plus the per-class scores.
std::pair<int, std::vector<double>> classify(const FluentModel& model,
                                             const std::vector<double>& descriptor);

struct ConfusionResult {
  Grid2D<double> matrix;  // rows = truth, row-normalized over populated rows
  double mean_precision = 0.0;
};

ConfusionResult confusion_and_mp(const std::vector<int>& predictions,
                                 const std::vector<int>& truths, int class_count);

void save_fluent_model(const FluentModel& model, const std::string& path);
FluentModel load_fluent_model(const std::string& path);

}  // namespace carfluents
