#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "data/annotation.hpp"
#include "pyr/frame.hpp"

namespace carfluents {

/// Scripted behavior of one part across the video.
struct PartScript {
  enum class Kind { static_status, swing_open, swing_close, blink };
  std::string part;
  Kind kind = Kind::static_status;
  int static_state = kStatusClose;  // for static_status (lights: off)
  int t0 = 8, t1 = 16;              // swing interval [t0, t1)
  int period = 10;                  // blink
  double duty = 0.5;
};

/// Abstract car scene: a textured body rectangle with attached part
/// rectangles whose geometry and intensity follow their status scripts.
/// Open panels protrude above the body; lights are intensity patches.
struct SyntheticScenario {
  std::uint64_t seed = 1;
  std::string video_id;
  int canvas_w = 128;
  int canvas_h = 72;
  int frames = 24;
  int view = 0;
  int car_type = 0;
  double car_x = 36.0;  // body top-left at t = 0
  double car_y = 26.0;
  double vx = 0.0;  // px/frame
  double vy = 0.0;
  std::vector<std::string> parts;     // which parts exist on this car
  std::vector<PartScript> scripts;    // unscripted parts stay closed/off
  std::string fluent_label;           // video-level label ("" = none)
  int fluent_start = 0, fluent_end = 0;
  int clutter = 0;        // distractor rectangles
  bool occluder = false;  // sweeping vertical occluder
};

struct SyntheticVideo {
  std::vector<Frame> frames;
  VideoAnnotation annotation;
};

/// Known part names with their car-local geometry. Panels: trunk, lb_door,
/// lf_door, hood (view 0) and trunk, rb_door, rf_door, hood (view 1).
/// Lights: left_light, right_light.
PartKind synth_part_kind(const std::string& part);

/// Deterministic rendering; the annotation matches the drawn geometry
/// exactly. Throws if a part rectangle would leave the canvas.
SyntheticVideo synth_generate(const SyntheticScenario& scenario);

/// Scenario for one of the 16 fluent labels (or the status-only template
/// "parts_static" whose part statuses are seeded constants).
SyntheticScenario scenario_from_template(const std::string& name, std::uint64_t seed);

/// Scenario JSON (the "generator spec" form referenced by manifests).
std::string scenario_to_json(const SyntheticScenario& s);
SyntheticScenario scenario_from_json(const std::string& text);

/// Renders a scenario into <dir>/frame_%04d.pgm + <dir>/annotation.json.
void synth_write_video(const SyntheticScenario& scenario, const std::string& dir);

}  // namespace carfluents
