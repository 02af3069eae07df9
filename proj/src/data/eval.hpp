#pragma once

#include <map>
#include <string>
#include <vector>

#include "data/annotation.hpp"

namespace carfluents {

/// One per-frame prediction for a ground-truth car (the "car boxes given,
/// one prediction per car" protocol).
struct FramePartPrediction {
  std::string name;
  BoxF box;
  int status = -1;
};

struct FramePrediction {
  int frame = 0;
  BoxF car_box;
  int view = -1;
  int car_type = -1;
  double score = 0.0;
  std::vector<FramePartPrediction> parts;
};

struct VideoPredictions {
  std::string video_id;
  std::vector<FramePrediction> frames;  // one entry per processed frame
};

struct EvalCounts {
  int instances = 0;
  int localized = 0;
  int status_correct = 0;
};

struct EvalResult {
  std::map<std::string, EvalCounts> per_part;
  double localization_rate = 0.0;   // mean over parts with >= 1 instance
  double status_rate = 0.0;
  int total_instances = 0;
};

/// Detection rates over the frames that carry predictions. A ground-truth
/// part annotated "occluded" counts as correct (both metrics) iff the
/// prediction says occluded; no box check applies in that case. Otherwise
/// localization requires IoU >= iou_thresh and status additionally requires
/// the label to match. Throws if a predicted frame lacks an annotation or a
/// ground-truth part has no prediction.
EvalResult evaluate_parts(const std::vector<VideoPredictions>& predictions,
                          const std::vector<VideoAnnotation>& annotations, double iou_thresh);

}  // namespace carfluents
