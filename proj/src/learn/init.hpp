#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "aog/graph.hpp"
#include "data/annotation.hpp"
#include "pyr/pyramid.hpp"

namespace carfluents {

struct TrainingSample {
  std::string video_id;
  std::vector<Frame> frames;
  VideoAnnotation annotation;

  // Filled by prepare_sample.
  std::vector<FeaturePyramid> pyramids;
  std::vector<FlowPyramid> flows;  // flow of pair (i, i+1) stored at index i
};

/// Builds feature pyramids for every frame and block-matching flow for every
/// consecutive pair.
void prepare_sample(TrainingSample& sample, const FeatureSpec& spec);

struct InitConfig {
  FeatureSpec feature_spec;
  std::uint64_t seed = 7;
  int negatives_per_template = 40;
  double template_c = 10.0;
  int aspect_k_cap = 3;  // open-status aspect clusters (elbow rule cap)
  double initial_temporal_weight = 0.1;
};

/// Template initialization: one view Or per annotated view, one car And per
/// (view, type) with a body terminal and one part Or per annotated part;
/// status branches are clustered ("open" split by aspect ratio) and each
/// cluster's template is trained as a small margin classifier on annotated
/// windows vs. random negatives. Statuses with no exemplars are pruned
/// (reported via *pruned).
AOGraph init_templates(const std::vector<TrainingSample>& samples, const InitConfig& cfg,
                       std::vector<std::string>* pruned = nullptr);

/// Feature window (filter layout order) at a box's cell position, clamped
/// into the grid.
std::vector<double> window_features(const FeatureGrid& grid, Cell cell, int tw, int th);

}  // namespace carfluents
