#pragma once

#include <string>
#include <vector>

#include "aog/graph.hpp"
#include "util/geometry.hpp"

namespace carfluents {

inline constexpr int kAnnotationVersion = 1;

struct PartAnnotation {
  std::string name;
  PartKind kind = PartKind::panel;
  BoxF box;
  int status = kStatusClose;
  bool occluded_flag = false;
};

struct FrameAnnotation {
  int frame = 0;
  BoxF car_box;
  int view = 0;
  int car_type = 0;
  std::vector<PartAnnotation> parts;
};

struct FluentInterval {
  std::string label;
  int start = 0;  // inclusive
  int end = 0;    // exclusive
};

struct VideoAnnotation {
  std::string video_id;
  int frame_count = 0;
  int width = 0;
  int height = 0;
  std::vector<FrameAnnotation> frames;
  std::vector<FluentInterval> fluents;

  const FrameAnnotation* frame(int index) const;
};

/// The 16 video-level fluent labels.
const std::vector<std::string>& fluent_labels();
int fluent_label_index(const std::string& label);  // -1 if unknown

/// Structural checks: boxes inside the frame, statuses in the part's
/// vocabulary, intervals inside [0, frame_count). Violations name the frame
/// and part.
std::vector<std::string> validate_annotation(const VideoAnnotation& ann);

/// JSON round-trip; load validates and throws on malformed documents,
/// unknown status tokens, or schema version mismatch.
void save_annotation(const VideoAnnotation& ann, const std::string& path);
VideoAnnotation load_annotation(const std::string& path);

}  // namespace carfluents
