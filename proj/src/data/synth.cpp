#include "data/synth.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>

#include "json.hpp"
#include "util/errors.hpp"
#include "util/rng.hpp"

namespace carfluents {

namespace {

constexpr double kBodyW = 56.0;
constexpr double kBodyH = 32.0;

// Stripe/checker signatures keep the panels visually distinct; pattern 0 is
// plain hash texture.
enum class Pattern { noise, vstripe, hstripe, checker, flat };

struct PartGeom {
  PartKind kind;
  BoxF closed;  // car-local
  BoxF open;    // car-local; lights reuse `closed`
  double closed_fill;
  double open_fill;
  Pattern pattern;
  int period;
  int view = -1;  // -1: present in every view
};

const PartGeom* part_geom(const std::string& name) {
  // Part extents stay >= 3 cells so a cell-lattice placement can always
  // reach IoU 0.5 against an arbitrarily offset ground-truth box.
  static const std::vector<std::pair<std::string, PartGeom>> geoms{
      {"trunk",
       {PartKind::panel, {2, 2, 12, 14}, {2, -16, 14, 18}, 0.40, 0.62, Pattern::checker, 4, -1}},
      {"lb_door",
       {PartKind::panel, {15, 2, 13, 14}, {13, -17, 16, 18}, 0.48, 0.70, Pattern::vstripe, 4, 0}},
      {"lf_door",
       {PartKind::panel, {28, 2, 13, 14}, {26, -17, 16, 18}, 0.52, 0.75, Pattern::vstripe, 7, 0}},
      {"rb_door",
       {PartKind::panel, {15, 2, 13, 14}, {13, -17, 16, 18}, 0.48, 0.70, Pattern::vstripe, 4, 1}},
      {"rf_door",
       {PartKind::panel, {28, 2, 13, 14}, {26, -17, 16, 18}, 0.52, 0.75, Pattern::vstripe, 7, 1}},
      {"hood",
       {PartKind::panel, {42, 2, 12, 14}, {40, -16, 14, 18}, 0.45, 0.68, Pattern::hstripe, 4, -1}},
      {"left_light",
       {PartKind::light, {0, 16, 16, 16}, {0, 16, 16, 16}, 0.12, 0.95, Pattern::flat, 0, -1}},
      {"right_light",
       {PartKind::light, {40, 16, 16, 16}, {40, 16, 16, 16}, 0.12, 0.95, Pattern::flat, 0, -1}},
  };
  for (const auto& [n, g] : geoms)
    if (n == name) return &g;
  return nullptr;
}

double hash01(std::uint64_t seed, int x, int y, int salt) {
  std::uint64_t h = seed;
  h ^= static_cast<std::uint64_t>(static_cast<std::uint32_t>(x)) * 0x9e3779b97f4a7c15ULL;
  h ^= static_cast<std::uint64_t>(static_cast<std::uint32_t>(y)) * 0xc2b2ae3d27d4eb4fULL;
  h ^= static_cast<std::uint64_t>(static_cast<std::uint32_t>(salt)) * 0x165667b19e3779f9ULL;
  h ^= h >> 30;
  h *= 0xbf58476d1ce4e5b9ULL;
  h ^= h >> 27;
  h *= 0x94d049bb133111ebULL;
  h ^= h >> 31;
  return (h >> 11) * 0x1.0p-53;
}

void fill_rect(Grid2D<float>& img, const BoxF& b, double fill, double amp, std::uint64_t seed,
               int salt, int local_x0 = 0, int local_y0 = 0, Pattern pattern = Pattern::noise,
               int period = 4) {
  const int x0 = std::max(0, static_cast<int>(std::lround(b.x)));
  const int y0 = std::max(0, static_cast<int>(std::lround(b.y)));
  const int x1 = std::min(img.width(), static_cast<int>(std::lround(b.x2())));
  const int y1 = std::min(img.height(), static_cast<int>(std::lround(b.y2())));
  for (int y = y0; y < y1; ++y) {
    for (int x = x0; x < x1; ++x) {
      const int lx = x - local_x0;
      const int ly = y - local_y0;
      double v = fill;
      switch (pattern) {
        case Pattern::noise:
          if (amp > 0.0) v += amp * (2.0 * hash01(seed, lx, ly, salt) - 1.0);
          break;
        case Pattern::vstripe:
          v += ((lx / std::max(1, period / 2)) % 2 ? amp : -amp);
          break;
        case Pattern::hstripe:
          v += ((ly / std::max(1, period / 2)) % 2 ? amp : -amp);
          break;
        case Pattern::checker:
          v += (((lx / std::max(1, period / 2)) + (ly / std::max(1, period / 2))) % 2 ? amp
                                                                                      : -amp);
          break;
        case Pattern::flat:
          break;
      }
      img.at(x, y) = static_cast<float>(std::clamp(v, 0.0, 1.0));
    }
  }
}

void outline_rect(Grid2D<float>& img, const BoxF& b, double fill) {
  const int x0 = std::max(0, static_cast<int>(std::lround(b.x)));
  const int y0 = std::max(0, static_cast<int>(std::lround(b.y)));
  const int x1 = std::min(img.width(), static_cast<int>(std::lround(b.x2())));
  const int y1 = std::min(img.height(), static_cast<int>(std::lround(b.y2())));
  for (int x = x0; x < x1; ++x) {
    if (y0 >= 0 && y0 < img.height()) img.at(x, y0) = static_cast<float>(fill);
    if (y1 - 1 >= 0 && y1 - 1 < img.height()) img.at(x, y1 - 1) = static_cast<float>(fill);
  }
  for (int y = y0; y < y1; ++y) {
    if (x0 >= 0 && x0 < img.width()) img.at(x0, y) = static_cast<float>(fill);
    if (x1 - 1 >= 0 && x1 - 1 < img.width()) img.at(x1 - 1, y) = static_cast<float>(fill);
  }
}

BoxF lerp_box(const BoxF& a, const BoxF& b, double t) {
  return BoxF{a.x + t * (b.x - a.x), a.y + t * (b.y - a.y), a.w + t * (b.w - a.w),
              a.h + t * (b.h - a.h)};
}

const PartScript* script_for(const SyntheticScenario& s, const std::string& part) {
  for (const auto& sc : s.scripts)
    if (sc.part == part) return &sc;
  return nullptr;
}

}  // namespace

PartKind synth_part_kind(const std::string& part) {
  const PartGeom* g = part_geom(part);
  if (!g) fail_invalid("unknown synthetic part \"" + part + "\"");
  return g->kind;
}

SyntheticVideo synth_generate(const SyntheticScenario& s) {
  SyntheticVideo video;
  video.annotation.video_id = s.video_id;
  video.annotation.frame_count = s.frames;
  video.annotation.width = s.canvas_w;
  video.annotation.height = s.canvas_h;
  if (!s.fluent_label.empty()) {
    int end = s.fluent_end > s.fluent_start ? s.fluent_end : s.frames;
    end = std::min(end, s.frames);
    const int start = std::clamp(s.fluent_start, 0, end - 1);
    video.annotation.fluents.push_back(FluentInterval{s.fluent_label, start, end});
  }

  // Static clutter rectangles, kept clear of the car's swept region.
  struct Clutter {
    BoxF box;
    double fill;
  };
  std::vector<Clutter> clutter;
  {
    Rng rng(s.seed ^ 0xc1a77e5ULL);
    const double x_end = s.car_x + s.vx * (s.frames - 1);
    const double y_end = s.car_y + s.vy * (s.frames - 1);
    BoxF swept{std::min(s.car_x, x_end) - 8, std::min(s.car_y, y_end) - 24,
               kBodyW + std::abs(s.vx) * (s.frames - 1) + 16,
               kBodyH + std::abs(s.vy) * (s.frames - 1) + 40};
    int attempts = 0;
    while (static_cast<int>(clutter.size()) < s.clutter && attempts++ < 200) {
      BoxF b{rng.uniform(0, s.canvas_w - 14), rng.uniform(0, s.canvas_h - 14),
             rng.uniform(6, 14), rng.uniform(6, 14)};
      if (intersection_area(b, swept) > 0.0) continue;
      clutter.push_back({b, rng.uniform(0.2, 0.7)});
    }
  }

  for (int t = 0; t < s.frames; ++t) {
    const int cx = static_cast<int>(std::lround(s.car_x + s.vx * t));
    const int cy = static_cast<int>(std::lround(s.car_y + s.vy * t));

    Frame frame;
    frame.index = t;
    frame.intensity = Grid2D<float>(s.canvas_w, s.canvas_h);
    fill_rect(frame.intensity, BoxF{0, 0, static_cast<double>(s.canvas_w),
                                    static_cast<double>(s.canvas_h)},
              0.82, 0.03, s.seed, 1);
    for (const auto& c : clutter) fill_rect(frame.intensity, c.box, c.fill, 0.05, s.seed, 2);

    const BoxF body{static_cast<double>(cx), static_cast<double>(cy), kBodyW, kBodyH};
    const double body_fill = s.view == 0 ? 0.35 : 0.30;
    fill_rect(frame.intensity, body, body_fill, 0.08, s.seed, 3, cx, cy);
    outline_rect(frame.intensity, body, 0.10);

    FrameAnnotation fa;
    fa.frame = t;
    fa.car_box = body;
    fa.view = s.view;
    fa.car_type = s.car_type;

    for (const auto& part_name : s.parts) {
      const PartGeom* geom = part_geom(part_name);
      if (!geom) fail_invalid("unknown synthetic part \"" + part_name + "\"");
      const PartScript* script = script_for(s, part_name);

      PartAnnotation pa;
      pa.name = part_name;
      pa.kind = geom->kind;

      if (geom->kind == PartKind::light) {
        bool on = false;
        if (script) {
          if (script->kind == PartScript::Kind::blink) {
            on = (t % script->period) < script->duty * script->period;
          } else {
            on = script->static_state == kStatusOpen;
          }
        }
        pa.status = on ? kStatusOpen : kStatusClose;
        const BoxF box{geom->closed.x + cx, geom->closed.y + cy, geom->closed.w, geom->closed.h};
        fill_rect(frame.intensity, box, on ? geom->open_fill : geom->closed_fill, 0.0, s.seed, 4);
        pa.box = box;
      } else {
        double a = 0.0;  // open amount
        if (script) {
          switch (script->kind) {
            case PartScript::Kind::static_status:
              a = script->static_state == kStatusOpen ? 1.0 : 0.0;
              break;
            case PartScript::Kind::swing_open:
              a = std::clamp(static_cast<double>(t - script->t0) /
                                 std::max(1, script->t1 - script->t0),
                             0.0, 1.0);
              break;
            case PartScript::Kind::swing_close:
              a = 1.0 - std::clamp(static_cast<double>(t - script->t0) /
                                       std::max(1, script->t1 - script->t0),
                                   0.0, 1.0);
              break;
            case PartScript::Kind::blink:
              fail_invalid("panel parts cannot blink: " + part_name);
          }
        }
        pa.status = a >= 0.5 ? kStatusOpen : kStatusClose;
        const BoxF local = lerp_box(geom->closed, geom->open, a);
        const BoxF box{local.x + cx, local.y + cy, local.w, local.h};
        if (box.x < 0 || box.y < 0 || box.x2() > s.canvas_w || box.y2() > s.canvas_h)
          fail_invalid("part rectangle leaves the canvas: " + part_name);
        if (a > 0.0) {
          // Cavity left behind at the closed position.
          const BoxF hole{geom->closed.x + cx, geom->closed.y + cy, geom->closed.w,
                          geom->closed.h};
          fill_rect(frame.intensity, hole, 0.15, 0.02, s.seed, 5);
        }
        const double fill = geom->closed_fill + a * (geom->open_fill - geom->closed_fill);
        // Open panels carry a sharp hash texture (good localization); closed
        // panels keep their stripe signature.
        if (a >= 0.5)
          fill_rect(frame.intensity, box, fill, 0.16, s.seed, 6 + 13 * (1 + (int)pa.name[0]),
                    cx, cy, Pattern::noise, 0);
        else
          fill_rect(frame.intensity, box, fill, 0.12, s.seed, 6, cx, cy, geom->pattern,
                    geom->period);
        outline_rect(frame.intensity, box, 0.12);
        pa.box = box;
      }
      fa.parts.push_back(std::move(pa));
    }

    if (s.occluder) {
      const double speed = static_cast<double>(s.canvas_w + 24) / s.frames;
      const BoxF occ{-12.0 + speed * t, 0.0, 12.0, static_cast<double>(s.canvas_h)};
      fill_rect(frame.intensity, occ, 0.55, 0.06, s.seed, 7);
      for (auto& pa : fa.parts) {
        const double covered = intersection_area(pa.box, occ);
        if (covered >= 0.5 * pa.box.area()) {
          pa.status = kStatusOccluded;
          pa.occluded_flag = true;
        }
      }
    }

    video.frames.push_back(std::move(frame));
    video.annotation.frames.push_back(std::move(fa));
  }
  return video;
}

namespace {

SyntheticScenario base_scenario(std::uint64_t seed) {
  SyntheticScenario s;
  s.seed = seed;
  s.car_y = 24.0;
  s.parts = {"lf_door", "hood", "left_light", "right_light"};
  return s;
}

}  // namespace

SyntheticScenario scenario_from_template(const std::string& name, std::uint64_t seed) {
  SyntheticScenario s = base_scenario(seed);
  s.video_id = name + "_" + std::to_string(seed);
  s.fluent_label = name;
  s.fluent_start = 6;
  s.fluent_end = 18;

  auto swing = [&](const std::string& part, bool open) {
    PartScript sc;
    sc.part = part;
    sc.kind = open ? PartScript::Kind::swing_open : PartScript::Kind::swing_close;
    sc.t0 = 8;
    sc.t1 = 16;
    s.scripts.push_back(sc);
    if (std::find(s.parts.begin(), s.parts.end(), part) == s.parts.end())
      s.parts.push_back(part);
  };
  auto blink = [&](const std::string& part) {
    PartScript sc;
    sc.part = part;
    sc.kind = PartScript::Kind::blink;
    s.scripts.push_back(sc);
  };
  if (name == "open_lf_door") swing("lf_door", true);
  else if (name == "close_lf_door") swing("lf_door", false);
  else if (name == "open_hood") swing("hood", true);
  else if (name == "close_hood") swing("hood", false);
  else if (name == "open_trunk") { s.parts.push_back("trunk"); swing("trunk", true); }
  else if (name == "close_trunk") { s.parts.push_back("trunk"); swing("trunk", false); }
  else if (name == "open_lb_door") { s.parts.push_back("lb_door"); swing("lb_door", true); }
  else if (name == "close_lb_door") { s.parts.push_back("lb_door"); swing("lb_door", false); }
  else if (name == "open_rf_door") { s.view = 1; s.parts = {"rf_door", "hood", "left_light", "right_light"}; swing("rf_door", true); }
  else if (name == "close_rf_door") { s.view = 1; s.parts = {"rf_door", "hood", "left_light", "right_light"}; swing("rf_door", false); }
  else if (name == "open_rb_door") { s.view = 1; s.parts = {"rb_door", "hood", "left_light", "right_light"}; swing("rb_door", true); }
  else if (name == "close_rb_door") { s.view = 1; s.parts = {"rb_door", "hood", "left_light", "right_light"}; swing("rb_door", false); }
  else if (name == "change_left_lane") { s.car_x = 64; s.vx = -2; blink("left_light"); }
  else if (name == "change_right_lane") { s.car_x = 8; s.vx = 2; blink("right_light"); }
  else if (name == "turn_left") blink("left_light");
  else if (name == "turn_right") blink("right_light");
  else if (name == "parts_static") {
    // Status-recognition template: seeded constant statuses, no fluents.
    s.fluent_label.clear();
    Rng rng(seed ^ 0x51a71c5ULL);
    for (const auto& part : s.parts) {
      PartScript sc;
      sc.part = part;
      sc.kind = PartScript::Kind::static_status;
      sc.static_state = rng.next_double() < 0.5 ? kStatusOpen : kStatusClose;
      s.scripts.push_back(sc);
    }
    s.car_x = 20 + (seed % 5) * 9;
    s.car_y = 22 + (seed % 3) * 5;
  } else {
    fail_invalid("unknown scenario template \"" + name + "\"");
  }
  return s;
}

std::string scenario_to_json(const SyntheticScenario& s) {
  nlohmann::json doc;
  doc["seed"] = s.seed;
  doc["video_id"] = s.video_id;
  doc["canvas"] = {s.canvas_w, s.canvas_h};
  doc["frames"] = s.frames;
  doc["view"] = s.view;
  doc["car_type"] = s.car_type;
  doc["car"] = {s.car_x, s.car_y};
  doc["velocity"] = {s.vx, s.vy};
  doc["parts"] = s.parts;
  doc["fluent"] = s.fluent_label;
  doc["fluent_interval"] = {s.fluent_start, s.fluent_end};
  doc["clutter"] = s.clutter;
  doc["occluder"] = s.occluder;
  nlohmann::json scripts = nlohmann::json::array();
  for (const auto& sc : s.scripts) {
    nlohmann::json js;
    js["part"] = sc.part;
    switch (sc.kind) {
      case PartScript::Kind::static_status:
        js["kind"] = "static";
        js["state"] = sc.static_state;
        break;
      case PartScript::Kind::swing_open:
        js["kind"] = "swing_open";
        js["t0"] = sc.t0;
        js["t1"] = sc.t1;
        break;
      case PartScript::Kind::swing_close:
        js["kind"] = "swing_close";
        js["t0"] = sc.t0;
        js["t1"] = sc.t1;
        break;
      case PartScript::Kind::blink:
        js["kind"] = "blink";
        js["period"] = sc.period;
        js["duty"] = sc.duty;
        break;
    }
    scripts.push_back(std::move(js));
  }
  doc["scripts"] = std::move(scripts);
  return doc.dump(2);
}

SyntheticScenario scenario_from_json(const std::string& text) {
  nlohmann::json doc;
  try {
    doc = nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    fail_parse(std::string("scenario: ") + e.what());
  }
  try {
    SyntheticScenario s;
    s.seed = doc.at("seed").get<std::uint64_t>();
    s.video_id = doc.value("video_id", std::string{});
    s.canvas_w = doc.at("canvas").at(0).get<int>();
    s.canvas_h = doc.at("canvas").at(1).get<int>();
    s.frames = doc.at("frames").get<int>();
    s.view = doc.value("view", 0);
    s.car_type = doc.value("car_type", 0);
    s.car_x = doc.at("car").at(0).get<double>();
    s.car_y = doc.at("car").at(1).get<double>();
    s.vx = doc.at("velocity").at(0).get<double>();
    s.vy = doc.at("velocity").at(1).get<double>();
    s.parts = doc.at("parts").get<std::vector<std::string>>();
    s.fluent_label = doc.value("fluent", std::string{});
    if (doc.contains("fluent_interval")) {
      s.fluent_start = doc["fluent_interval"].at(0).get<int>();
      s.fluent_end = doc["fluent_interval"].at(1).get<int>();
    }
    s.clutter = doc.value("clutter", 0);
    s.occluder = doc.value("occluder", false);
    for (const auto& js : doc.value("scripts", nlohmann::json::array())) {
      PartScript sc;
      sc.part = js.at("part").get<std::string>();
      const std::string kind = js.at("kind").get<std::string>();
      if (kind == "static") {
        sc.kind = PartScript::Kind::static_status;
        sc.static_state = js.at("state").get<int>();
      } else if (kind == "swing_open" || kind == "swing_close") {
        sc.kind = kind == "swing_open" ? PartScript::Kind::swing_open
                                       : PartScript::Kind::swing_close;
        sc.t0 = js.at("t0").get<int>();
        sc.t1 = js.at("t1").get<int>();
      } else if (kind == "blink") {
        sc.kind = PartScript::Kind::blink;
        sc.period = js.at("period").get<int>();
        sc.duty = js.at("duty").get<double>();
      } else {
        fail_parse("scenario: unknown script kind \"" + kind + "\"");
      }
      s.scripts.push_back(std::move(sc));
    }
    return s;
  } catch (const nlohmann::json::exception& e) {
    fail_parse(std::string("scenario: ") + e.what());
  }
}

void synth_write_video(const SyntheticScenario& scenario, const std::string& dir) {
  namespace fs = std::filesystem;
  std::error_code ec;
  fs::create_directories(dir, ec);
  const SyntheticVideo video = synth_generate(scenario);
  char name[32];
  for (const auto& frame : video.frames) {
    std::snprintf(name, sizeof(name), "frame_%04d.pgm", frame.index);
    save_pgm(frame, dir + "/" + name);
  }
  save_annotation(video.annotation, dir + "/annotation.json");
}

}  // namespace carfluents
