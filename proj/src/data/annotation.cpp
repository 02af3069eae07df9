#include "data/annotation.hpp"

#include <fstream>

#include "json.hpp"
#include "util/errors.hpp"

namespace carfluents {

using nlohmann::json;

const FrameAnnotation* VideoAnnotation::frame(int index) const {
  for (const auto& f : frames)
    if (f.frame == index) return &f;
  return nullptr;
}

const std::vector<std::string>& fluent_labels() {
  static const std::vector<std::string> labels{
      "open_lf_door",  "close_lf_door", "open_lb_door",     "close_lb_door",
      "open_rf_door",  "close_rf_door", "open_rb_door",     "close_rb_door",
      "open_hood",     "close_hood",    "open_trunk",       "close_trunk",
      "change_left_lane", "change_right_lane", "turn_left", "turn_right"};
  return labels;
}

int fluent_label_index(const std::string& label) {
  const auto& labels = fluent_labels();
  for (std::size_t i = 0; i < labels.size(); ++i)
    if (labels[i] == label) return static_cast<int>(i);
  return -1;
}

std::vector<std::string> validate_annotation(const VideoAnnotation& ann) {
  std::vector<std::string> violations;
  for (const auto& f : ann.frames) {
    if (f.frame < 0 || f.frame >= ann.frame_count)
      violations.push_back("frame " + std::to_string(f.frame) + ": index out of range");
    auto check_box = [&](const BoxF& b, const std::string& what) {
      if (b.x < 0 || b.y < 0 || b.x2() > ann.width || b.y2() > ann.height)
        violations.push_back("frame " + std::to_string(f.frame) + ": " + what +
                             " box outside frame bounds");
    };
    check_box(f.car_box, "car");
    for (const auto& p : f.parts) {
      check_box(p.box, "part " + p.name);
      const int z = static_cast<int>(status_tokens(p.kind).size());
      if (p.status < 0 || p.status >= z)
        violations.push_back("frame " + std::to_string(f.frame) + ": part " + p.name +
                             " has status index out of vocabulary");
    }
  }
  for (const auto& fl : ann.fluents) {
    if (fl.start < 0 || fl.end > ann.frame_count || fl.start >= fl.end)
      violations.push_back("fluent " + fl.label + ": interval out of range");
  }
  return violations;
}

namespace {

json box_to_json(const BoxF& b) { return json::array({b.x, b.y, b.w, b.h}); }

BoxF box_from_json(const json& j) {
  return BoxF{j.at(0).get<double>(), j.at(1).get<double>(), j.at(2).get<double>(),
              j.at(3).get<double>()};
}

std::string kind_token(PartKind k) { return k == PartKind::light ? "light" : "panel"; }

}  // namespace

void save_annotation(const VideoAnnotation& ann, const std::string& path) {
  json doc;
  doc["schema_version"] = kAnnotationVersion;
  doc["video_id"] = ann.video_id;
  doc["frame_count"] = ann.frame_count;
  doc["width"] = ann.width;
  doc["height"] = ann.height;
  json frames = json::array();
  for (const auto& f : ann.frames) {
    json jf;
    jf["frame"] = f.frame;
    jf["car_box"] = box_to_json(f.car_box);
    jf["view"] = f.view;
    jf["car_type"] = f.car_type;
    json parts = json::array();
    for (const auto& p : f.parts) {
      parts.push_back({{"name", p.name},
                       {"kind", kind_token(p.kind)},
                       {"box", box_to_json(p.box)},
                       {"status", status_tokens(p.kind)[static_cast<std::size_t>(p.status)]},
                       {"occluded", p.occluded_flag}});
    }
    jf["parts"] = std::move(parts);
    frames.push_back(std::move(jf));
  }
  doc["frames"] = std::move(frames);
  json fluents = json::array();
  for (const auto& fl : ann.fluents)
    fluents.push_back({{"label", fl.label}, {"start", fl.start}, {"end", fl.end}});
  doc["fluents"] = std::move(fluents);

  std::ofstream out(path);
  if (!out) fail_io("cannot write " + path);
  out << doc.dump(2) << "\n";
}

VideoAnnotation load_annotation(const std::string& path) {
  std::ifstream in(path);
  if (!in) fail_io("cannot open " + path);
  json doc;
  try {
    doc = json::parse(in);
  } catch (const json::exception& e) {
    fail_parse(path + ": " + e.what());
  }
  try {
    if (doc.at("schema_version").get<int>() != kAnnotationVersion)
      fail_parse(path + ": unsupported annotation schema version");
    VideoAnnotation ann;
    ann.video_id = doc.at("video_id").get<std::string>();
    ann.frame_count = doc.at("frame_count").get<int>();
    ann.width = doc.at("width").get<int>();
    ann.height = doc.at("height").get<int>();
    for (const auto& jf : doc.at("frames")) {
      FrameAnnotation f;
      f.frame = jf.at("frame").get<int>();
      f.car_box = box_from_json(jf.at("car_box"));
      f.view = jf.at("view").get<int>();
      f.car_type = jf.at("car_type").get<int>();
      for (const auto& jp : jf.at("parts")) {
        PartAnnotation p;
        p.name = jp.at("name").get<std::string>();
        p.kind = part_kind_from_token(jp.at("kind").get<std::string>());
        p.box = box_from_json(jp.at("box"));
        p.status = status_index_from_token(p.kind, jp.at("status").get<std::string>());
        p.occluded_flag = jp.value("occluded", false);
        f.parts.push_back(std::move(p));
      }
      ann.frames.push_back(std::move(f));
    }
    for (const auto& jf : doc.at("fluents")) {
      ann.fluents.push_back(FluentInterval{jf.at("label").get<std::string>(),
                                           jf.at("start").get<int>(), jf.at("end").get<int>()});
    }
    const auto violations = validate_annotation(ann);
    if (!violations.empty()) fail_parse(path + ": " + violations.front());
    return ann;
  } catch (const json::exception& e) {
    fail_parse(path + ": " + e.what());
  }
}

}  // namespace carfluents
