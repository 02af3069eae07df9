#include <cstdio>
#include <filesystem>
#include <fstream>
#include <string>

#include "carfluents.h"
#include "doctest.h"

namespace fs = std::filesystem;

namespace {

struct Scratch {
  fs::path dir;
  Scratch() {
    dir = fs::temp_directory_path() / "cf_capi_test";
    fs::remove_all(dir);
    fs::create_directories(dir);
  }
  ~Scratch() { fs::remove_all(dir); }
  std::string path(const std::string& name) const { return (dir / name).string(); }
};

int count_lines(const std::string& path) {
  std::ifstream in(path);
  int n = 0;
  std::string line;
  while (std::getline(in, line))
    if (!line.empty()) ++n;
  return n;
}

}  // namespace

TEST_CASE("C API end-to-end: synth, train, validate, detect, track, oracle") {
  Scratch scratch;
  REQUIRE(std::string(cf_version()).find("carfluents") == 0);

  // Errors carry codes and messages.
  cf_model* missing = nullptr;
  CHECK(cf_model_load(scratch.path("nope.json").c_str(), &missing) == CF_EIO);
  CHECK(std::string(cf_last_error()).find("nope.json") != std::string::npos);
  {
    std::ofstream bad(scratch.path("bad.json"));
    bad << "{ not json";
  }
  CHECK(cf_model_load(scratch.path("bad.json").c_str(), &missing) == CF_EPARSE);
  CHECK(cf_model_load(nullptr, &missing) == CF_EINVAL);

  // Synthesize a small labelled batch and train a model.
  char* manifest = nullptr;
  REQUIRE(cf_synth_batch(scratch.path("data").c_str(), 5,
                         "templates=parts_static\ntrain=3\ntest=1\nframes=12\nworkers=2",
                         &manifest) == CF_OK);
  REQUIRE(manifest != nullptr);
  const std::string manifest_path = manifest;
  cf_string_free(manifest);

  REQUIRE(cf_train_aog(manifest_path.c_str(), "outer=2\nepochs=200\nseed=7\nworkers=2",
                       scratch.path("model.json").c_str(),
                       scratch.path("log.csv").c_str()) == CF_OK);
  CHECK(count_lines(scratch.path("log.csv")) >= 2);

  cf_model* model = nullptr;
  REQUIRE(cf_model_load(scratch.path("model.json").c_str(), &model) == CF_OK);

  char* violations = nullptr;
  REQUIRE(cf_model_validate(model, &violations) == CF_OK);
  CHECK(std::string(violations) == "[]");
  cf_string_free(violations);

  REQUIRE(cf_model_save(model, scratch.path("copy.json").c_str()) == CF_OK);
  cf_model* copy = nullptr;
  REQUIRE(cf_model_load(scratch.path("copy.json").c_str(), &copy) == CF_OK);
  cf_model_free(copy);

  // Detection above any score yields an empty detections file.
  const std::string video = scratch.path("data") + "/train_parts_static_0";
  REQUIRE(cf_detect(model, video.c_str(), nullptr, "tau=999", scratch.path("empty.jsonl").c_str()) ==
          CF_OK);
  CHECK(count_lines(scratch.path("empty.jsonl")) == 0);

  // Default threshold finds the car and tracks its parts.
  REQUIRE(cf_detect(model, video.c_str(), (video + "/annotation.json").c_str(), nullptr,
                    scratch.path("dets.jsonl").c_str()) == CF_OK);
  CHECK(count_lines(scratch.path("dets.jsonl")) > 0);
  CHECK(fs::exists(scratch.path("dets.jsonl") + ".pred.json"));

  REQUIRE(cf_track(model, video.c_str(), nullptr, scratch.path("tracks.jsonl").c_str()) == CF_OK);
  CHECK(count_lines(scratch.path("tracks.jsonl")) == 4);  // one track per part

  // Part evaluation over the test split.
  char* report = nullptr;
  REQUIRE(cf_eval_parts(model, manifest_path.c_str(), "split=test\nworkers=2", &report) == CF_OK);
  REQUIRE(report != nullptr);
  CHECK(std::string(report).find("localization_rate") != std::string::npos);
  cf_string_free(report);

  cf_model_free(model);
  cf_model_free(nullptr);  // must be a no-op
}

TEST_CASE("C API oracle suite reports zero failures") {
  Scratch scratch;
  int failures = -1;
  REQUIRE(cf_oracle_suite(3, scratch.path("suite.csv").c_str(), &failures) == CF_OK);
  CHECK(failures == 0);
  CHECK(count_lines(scratch.path("suite.csv")) == 7);  // header + 6 checks
}

TEST_CASE("C API synth video renders frames and annotation") {
  Scratch scratch;
  REQUIRE(cf_synth_video("open_hood", scratch.path("v").c_str(), 3, "frames=10") == CF_OK);
  int frames = 0;
  for (const auto& e : fs::directory_iterator(scratch.path("v")))
    if (e.path().extension() == ".pgm") ++frames;
  CHECK(frames == 10);
  CHECK(fs::exists(scratch.path("v") + "/annotation.json"));
  CHECK(cf_synth_video("no_such_template", scratch.path("v2").c_str(), 3, nullptr) == CF_EINVAL);
}
