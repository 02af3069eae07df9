#include "data/eval.hpp"

#include "util/errors.hpp"

namespace carfluents {

EvalResult evaluate_parts(const std::vector<VideoPredictions>& predictions,
                          const std::vector<VideoAnnotation>& annotations, double iou_thresh) {
  EvalResult result;
  for (const auto& video : predictions) {
    const VideoAnnotation* ann = nullptr;
    for (const auto& a : annotations)
      if (a.video_id == video.video_id) ann = &a;
    if (!ann) fail_invalid("evaluate_parts: no annotation for video " + video.video_id);

    for (const auto& pred : video.frames) {
      const FrameAnnotation* fa = ann->frame(pred.frame);
      if (!fa)
        fail_invalid("evaluate_parts: predicted frame " + std::to_string(pred.frame) +
                     " has no annotation in " + video.video_id);
      for (const auto& gt : fa->parts) {
        const FramePartPrediction* match = nullptr;
        for (const auto& pp : pred.parts)
          if (pp.name == gt.name) match = &pp;
        if (!match)
          fail_invalid("evaluate_parts: no prediction for part " + gt.name + " in " +
                       video.video_id);
        auto& counts = result.per_part[gt.name];
        counts.instances += 1;
        if (gt.status == kStatusOccluded) {
          if (match->status == kStatusOccluded) {
            counts.localized += 1;
            counts.status_correct += 1;
          }
          continue;
        }
        const bool located = box_iou(match->box, gt.box) >= iou_thresh;
        if (located) {
          counts.localized += 1;
          if (match->status == gt.status) counts.status_correct += 1;
        }
      }
    }
  }

  int parts_with_instances = 0;
  for (const auto& [name, counts] : result.per_part) {
    (void)name;
    if (counts.instances == 0) continue;
    ++parts_with_instances;
    result.localization_rate += static_cast<double>(counts.localized) / counts.instances;
    result.status_rate += static_cast<double>(counts.status_correct) / counts.instances;
    result.total_instances += counts.instances;
  }
  if (parts_with_instances > 0) {
    result.localization_rate /= parts_with_instances;
    result.status_rate /= parts_with_instances;
  }
  return result;
}

}  // namespace carfluents
