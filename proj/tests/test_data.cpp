#include <filesystem>
#include <fstream>

#include "data/annotation.hpp"
#include "data/eval.hpp"
#include "data/manifest.hpp"
#include "data/synth.hpp"
#include "doctest.h"
#include "pyr/frame.hpp"
#include "util/errors.hpp"
#include "util/rng.hpp"

using namespace carfluents;

TEST_CASE("generator determinism: same seed, identical frames and annotations") {
  const auto s = scenario_from_template("open_hood", 42);
  const auto a = synth_generate(s);
  const auto b = synth_generate(s);
  REQUIRE(a.frames.size() == b.frames.size());
  for (std::size_t i = 0; i < a.frames.size(); ++i) {
    REQUIRE(a.frames[i].intensity.size() == b.frames[i].intensity.size());
    for (std::size_t j = 0; j < a.frames[i].intensity.size(); ++j)
      REQUIRE(a.frames[i].intensity.data()[j] == b.frames[i].intensity.data()[j]);
  }
  // Different seed changes the texture somewhere.
  auto s2 = s;
  s2.seed = 43;
  const auto c = synth_generate(s2);
  bool any_diff = false;
  for (std::size_t j = 0; j < a.frames[0].intensity.size(); ++j)
    any_diff |= a.frames[0].intensity.data()[j] != c.frames[0].intensity.data()[j];
  CHECK(any_diff);
}

TEST_CASE("static scenario produces identical frames and constant annotation") {
  SyntheticScenario s;
  s.seed = 5;
  s.video_id = "static";
  s.parts = {"lf_door", "hood"};
  const auto v = synth_generate(s);
  for (std::size_t i = 1; i < v.frames.size(); ++i)
    for (std::size_t j = 0; j < v.frames[0].intensity.size(); ++j)
      REQUIRE(v.frames[i].intensity.data()[j] == v.frames[0].intensity.data()[j]);
  for (const auto& fa : v.annotation.frames) {
    CHECK(fa.car_box == v.annotation.frames[0].car_box);
    for (std::size_t p = 0; p < fa.parts.size(); ++p)
      CHECK(fa.parts[p].status == v.annotation.frames[0].parts[p].status);
  }
}

TEST_CASE("open_hood swing grows the hood box and flips the status midway") {
  const auto s = scenario_from_template("open_hood", 7);
  const auto v = synth_generate(s);
  double prev_h = 0.0;
  for (const auto& fa : v.annotation.frames) {
    const PartAnnotation* hood = nullptr;
    for (const auto& p : fa.parts)
      if (p.name == "hood") hood = &p;
    REQUIRE(hood != nullptr);
    if (fa.frame >= 8 && fa.frame < 16) CHECK(hood->box.h >= prev_h - 1e-9);
    prev_h = hood->box.h;
    if (fa.frame < 12) CHECK(hood->status == kStatusClose);
    if (fa.frame >= 12) CHECK(hood->status == kStatusOpen);
  }
}

TEST_CASE("blinking light alternates mean box intensity every half period") {
  auto s = scenario_from_template("turn_left", 9);
  const auto v = synth_generate(s);
  std::vector<double> means;
  for (const auto& fa : v.annotation.frames) {
    const PartAnnotation* light = nullptr;
    for (const auto& p : fa.parts)
      if (p.name == "left_light") light = &p;
    REQUIRE(light != nullptr);
    means.push_back(mean_intensity(v.frames[static_cast<std::size_t>(fa.frame)], light->box.x,
                                   light->box.y, light->box.w, light->box.h));
    // Annotation matches the square wave.
    const bool on = (fa.frame % 10) < 5;
    CHECK(light->status == (on ? kStatusOpen : kStatusClose));
  }
  CHECK(means[2] > 0.7);   // on phase
  CHECK(means[7] < 0.4);   // off phase
  CHECK(means[12] > 0.7);  // on again
}

TEST_CASE("annotation save/load round-trips") {
  const auto v = synth_generate(scenario_from_template("open_lf_door", 3));
  const std::string path = "test_ann.json";
  save_annotation(v.annotation, path);
  const auto back = load_annotation(path);
  CHECK(back.video_id == v.annotation.video_id);
  CHECK(back.frame_count == v.annotation.frame_count);
  REQUIRE(back.frames.size() == v.annotation.frames.size());
  for (std::size_t i = 0; i < back.frames.size(); ++i) {
    CHECK(back.frames[i].car_box == v.annotation.frames[i].car_box);
    REQUIRE(back.frames[i].parts.size() == v.annotation.frames[i].parts.size());
    for (std::size_t p = 0; p < back.frames[i].parts.size(); ++p) {
      CHECK(back.frames[i].parts[p].status == v.annotation.frames[i].parts[p].status);
      CHECK(back.frames[i].parts[p].box == v.annotation.frames[i].parts[p].box);
    }
  }
  CHECK(back.fluents.size() == v.annotation.fluents.size());
}

TEST_CASE("annotation loader names unknown status tokens") {
  const std::string path = "test_bad_ann.json";
  std::ofstream out(path);
  out << R"({"schema_version":1,"video_id":"x","frame_count":1,"width":64,"height":48,
  "frames":[{"frame":0,"car_box":[0,0,10,10],"view":0,"car_type":0,
   "parts":[{"name":"hood","kind":"panel","box":[0,0,4,4],"status":"ajar","occluded":false}]}],
  "fluents":[]})";
  out.close();
  try {
    load_annotation(path);
    FAIL("expected a parse error");
  } catch (const Error& e) {
    CHECK(std::string(e.what()).find("ajar") != std::string::npos);
  }
}

TEST_CASE("annotation loader rejects out-of-frame boxes and bad versions") {
  const std::string path = "test_bad_box.json";
  {
    std::ofstream out(path);
    out << R"({"schema_version":1,"video_id":"x","frame_count":1,"width":64,"height":48,
    "frames":[{"frame":0,"car_box":[60,0,10,10],"view":0,"car_type":0,"parts":[]}],
    "fluents":[]})";
  }
  CHECK_THROWS_AS(load_annotation(path), Error);
  {
    std::ofstream out(path);
    out << R"({"schema_version":9,"video_id":"x","frame_count":1,"width":64,"height":48,
    "frames":[],"fluents":[]})";
  }
  CHECK_THROWS_AS(load_annotation(path), Error);
}

TEST_CASE("evaluation protocol: perfect predictions, misses, occlusion rule") {
  const auto v = synth_generate(scenario_from_template("parts_static", 11));
  std::vector<VideoAnnotation> anns{v.annotation};

  VideoPredictions perfect;
  perfect.video_id = v.annotation.video_id;
  for (const auto& fa : v.annotation.frames) {
    FramePrediction fp;
    fp.frame = fa.frame;
    fp.car_box = fa.car_box;
    fp.view = fa.view;
    fp.car_type = fa.car_type;
    for (const auto& p : fa.parts) fp.parts.push_back({p.name, p.box, p.status});
    perfect.frames.push_back(std::move(fp));
  }
  const auto res = evaluate_parts({perfect}, anns, 0.5);
  CHECK(res.localization_rate == doctest::Approx(1.0));
  CHECK(res.status_rate == doctest::Approx(1.0));

  // Boxes shifted beyond their own size: localization 0.
  VideoPredictions shifted = perfect;
  for (auto& fp : shifted.frames)
    for (auto& p : fp.parts) p.box.x += 2.0 * p.box.w + 5.0;
  const auto res_shift = evaluate_parts({shifted}, anns, 0.5);
  CHECK(res_shift.localization_rate == doctest::Approx(0.0));
  CHECK(res_shift.status_rate == doctest::Approx(0.0));

  // Correct boxes, flipped statuses: localization stays 1, status drops to 0.
  VideoPredictions flipped = perfect;
  for (auto& fp : flipped.frames)
    for (auto& p : fp.parts) p.status = p.status == kStatusOpen ? kStatusClose : kStatusOpen;
  const auto res_flip = evaluate_parts({flipped}, anns, 0.5);
  CHECK(res_flip.localization_rate == doctest::Approx(1.0));
  CHECK(res_flip.status_rate == doctest::Approx(0.0));
  CHECK(res_flip.status_rate <= res_flip.localization_rate);

  // Occluded rule: predicted "occluded" counts regardless of box.
  VideoAnnotation occ_ann = v.annotation;
  for (auto& fa : occ_ann.frames) fa.parts[0].status = kStatusOccluded;
  VideoPredictions occ_pred = perfect;
  for (auto& fp : occ_pred.frames) {
    fp.parts[0].status = kStatusOccluded;
    fp.parts[0].box.x += 100.0;  // box is irrelevant when occluded is predicted
    if (fp.parts[0].box.x2() > occ_ann.width) fp.parts[0].box.x = 0.0;
  }
  const auto res_occ = evaluate_parts({occ_pred}, {occ_ann}, 0.5);
  CHECK(res_occ.localization_rate == doctest::Approx(1.0));
  CHECK(res_occ.status_rate == doctest::Approx(1.0));
}

TEST_CASE("status rate never exceeds localization rate") {
  const auto v = synth_generate(scenario_from_template("open_lf_door", 21));
  Rng rng(99);
  VideoPredictions noisy;
  noisy.video_id = v.annotation.video_id;
  for (const auto& fa : v.annotation.frames) {
    FramePrediction fp;
    fp.frame = fa.frame;
    fp.car_box = fa.car_box;
    fp.view = fa.view;
    fp.car_type = fa.car_type;
    for (const auto& p : fa.parts) {
      BoxF box = p.box;
      box.x += rng.uniform(-6, 6);
      box.y += rng.uniform(-6, 6);
      int status = p.status;
      if (rng.next_double() < 0.3) status = (status + 1) % 3;
      fp.parts.push_back({p.name, box, status});
    }
    noisy.frames.push_back(std::move(fp));
  }
  const auto res = evaluate_parts({noisy}, {v.annotation}, 0.5);
  CHECK(res.status_rate <= res.localization_rate + 1e-12);
}

TEST_CASE("scenario JSON and manifest round-trip; PGM videos load back") {
  const auto s = scenario_from_template("change_left_lane", 13);
  const auto back = scenario_from_json(scenario_to_json(s));
  CHECK(back.seed == s.seed);
  CHECK(back.vx == s.vx);
  CHECK(back.parts == s.parts);
  CHECK(back.scripts.size() == s.scripts.size());

  const std::string dir = "test_video_dir";
  synth_write_video(s, dir);
  const auto frames = list_video_frames(dir);
  CHECK(static_cast<int>(frames.size()) == s.frames);
  const auto ann = load_annotation(dir + "/annotation.json");
  CHECK(ann.frame_count == s.frames);

  DatasetManifest manifest;
  manifest.push_back({dir, dir + "/annotation.json", "train"});
  save_manifest(manifest, "test_manifest.json");
  const auto mback = load_manifest("test_manifest.json");
  REQUIRE(mback.size() == 1);
  CHECK(mback[0].video_dir == dir);
  CHECK(filter_split(mback, "train").size() == 1);
  CHECK(filter_split(mback, "test").empty());
  std::filesystem::remove_all(dir);
}

TEST_CASE("all sixteen fluent templates generate valid annotated videos") {
  for (const auto& label : fluent_labels()) {
    const auto s = scenario_from_template(label, 2);
    const auto v = synth_generate(s);
    CHECK(validate_annotation(v.annotation).empty());
    REQUIRE(!v.annotation.fluents.empty());
    CHECK(v.annotation.fluents[0].label == label);
    CHECK(fluent_label_index(label) >= 0);
  }
}

TEST_CASE("occluder flips covered parts to occluded with the flag set") {
  auto s = scenario_from_template("parts_static", 4);
  s.occluder = true;
  const auto v = synth_generate(s);
  int occluded = 0;
  for (const auto& fa : v.annotation.frames)
    for (const auto& p : fa.parts)
      if (p.status == kStatusOccluded) {
        CHECK(p.occluded_flag);
        ++occluded;
      }
  CHECK(occluded > 0);
}
