#include "carfluents.h"

#include <cstring>
#include <fstream>
#include <map>
#include <memory>
#include <sstream>

#include "json.hpp"
#include "oracle/suite.hpp"
#include "pipeline/pipeline.hpp"
#include "util/errors.hpp"

namespace {

using namespace carfluents;

thread_local std::string g_last_error;

int set_error(ErrorKind kind, const std::string& msg) {
  g_last_error = msg;
  switch (kind) {
    case ErrorKind::invalid_argument: return CF_EINVAL;
    case ErrorKind::io: return CF_EIO;
    case ErrorKind::parse: return CF_EPARSE;
    case ErrorKind::runtime: return CF_EFAIL;
  }
  return CF_EFAIL;
}

template <typename Fn>
int guarded(Fn&& fn) {
  try {
    fn();
    return CF_OK;
  } catch (const Error& e) {
    return set_error(e.kind(), e.what());
  } catch (const std::exception& e) {
    return set_error(ErrorKind::runtime, e.what());
  } catch (...) {
    return set_error(ErrorKind::runtime, "unknown failure");
  }
}

char* dup_string(const std::string& s) {
  char* out = static_cast<char*>(std::malloc(s.size() + 1));
  std::memcpy(out, s.c_str(), s.size() + 1);
  return out;
}

// "key=value" pairs separated by newlines or semicolons.
std::map<std::string, std::string> parse_options(const char* options) {
  std::map<std::string, std::string> kv;
  if (!options) return kv;
  std::string text(options);
  for (char& c : text)
    if (c == ';') c = '\n';
  std::istringstream in(text);
  std::string line;
  while (std::getline(in, line)) {
    const auto eq = line.find('=');
    if (eq == std::string::npos) continue;
    auto trim = [](std::string s) {
      const auto b = s.find_first_not_of(" \t\r");
      const auto e = s.find_last_not_of(" \t\r");
      return b == std::string::npos ? std::string{} : s.substr(b, e - b + 1);
    };
    const std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    if (!key.empty()) kv[key] = value;
  }
  return kv;
}

double opt_double(const std::map<std::string, std::string>& kv, const std::string& key,
                  double fallback) {
  auto it = kv.find(key);
  return it == kv.end() ? fallback : std::stod(it->second);
}

int opt_int(const std::map<std::string, std::string>& kv, const std::string& key, int fallback) {
  auto it = kv.find(key);
  return it == kv.end() ? fallback : std::stoi(it->second);
}

std::uint64_t opt_u64(const std::map<std::string, std::string>& kv, const std::string& key,
                      std::uint64_t fallback) {
  auto it = kv.find(key);
  return it == kv.end() ? fallback : std::stoull(it->second);
}

bool opt_bool(const std::map<std::string, std::string>& kv, const std::string& key,
              bool fallback) {
  auto it = kv.find(key);
  if (it == kv.end()) return fallback;
  return it->second == "1" || it->second == "true" || it->second == "yes";
}

std::string opt_str(const std::map<std::string, std::string>& kv, const std::string& key,
                    const std::string& fallback) {
  auto it = kv.find(key);
  return it == kv.end() ? fallback : it->second;
}

FeatureSpec feature_spec_from(const std::map<std::string, std::string>& kv) {
  FeatureSpec spec;
  spec.cell_size = opt_int(kv, "cell_size", 4);
  spec.interval = opt_int(kv, "interval", 1);
  spec.min_level_cells = opt_int(kv, "min_level_cells", 4);
  spec.channels.orientation_bins = opt_int(kv, "orientation_bins", 9);
  spec.channels.intensity_channel = opt_bool(kv, "intensity_channel", true);
  return spec;
}

DetectOptions detect_options_from(const std::map<std::string, std::string>& kv) {
  DetectOptions o;
  o.tau = opt_double(kv, "tau", -1e12);
  o.nms_overlap = opt_double(kv, "nms", 0.65);
  o.topk = opt_int(kv, "topk", 5);
  o.stride = opt_int(kv, "stride", 3);
  o.lbp.max_iters = opt_int(kv, "lbp_iters", 20);
  o.lbp.epsilon = opt_double(kv, "lbp_eps", 1e-6);
  o.workers = opt_int(kv, "workers", 1);
  return o;
}

FluentPipelineOptions fluent_options_from(const std::map<std::string, std::string>& kv) {
  FluentPipelineOptions o;
  o.detect = detect_options_from(kv);
  o.lambda = opt_double(kv, "lambda", 1.0);
  o.proposal_margin = opt_double(kv, "margin", 0.5);
  o.k = opt_int(kv, "k", 8);
  o.pca_fraction = opt_double(kv, "pca", 0.5);
  o.c = opt_double(kv, "c", 1.0);
  o.seed = opt_u64(kv, "seed", 7);
  o.workers = opt_int(kv, "workers", 1);
  return o;
}

std::vector<std::string> split_list(const std::string& text) {
  std::vector<std::string> out;
  std::istringstream in(text);
  std::string item;
  while (std::getline(in, item, ','))
    if (!item.empty()) out.push_back(item);
  return out;
}

}  // namespace

struct cf_model {
  carfluents::AOGraph graph;
};

extern "C" {

const char* cf_version(void) { return "carfluents 1.0.0"; }

const char* cf_last_error(void) { return g_last_error.c_str(); }

void cf_string_free(char* s) { std::free(s); }

int cf_model_load(const char* path, cf_model** out) {
  return guarded([&] {
    if (!path || !out) fail_invalid("cf_model_load: null argument");
    auto model = std::make_unique<cf_model>();
    model->graph = load_model(path);
    *out = model.release();
  });
}

int cf_model_save(const cf_model* model, const char* path) {
  return guarded([&] {
    if (!model || !path) fail_invalid("cf_model_save: null argument");
    save_model(model->graph, path);
  });
}

void cf_model_free(cf_model* model) { delete model; }

int cf_model_validate(const cf_model* model, char** violations_json) {
  return guarded([&] {
    if (!model || !violations_json) fail_invalid("cf_model_validate: null argument");
    const auto violations = validate_graph(model->graph);
    nlohmann::json doc = nlohmann::json::array();
    for (const auto& v : violations) doc.push_back(v);
    *violations_json = dup_string(doc.dump());
  });
}

int cf_synth_video(const char* template_or_spec, const char* out_dir, uint64_t seed,
                   const char* options) {
  return guarded([&] {
    if (!template_or_spec || !out_dir) fail_invalid("cf_synth_video: null argument");
    const auto kv = parse_options(options);
    SyntheticScenario scenario;
    const std::string spec(template_or_spec);
    if (spec.size() > 5 && spec.substr(spec.size() - 5) == ".json") {
      std::ifstream in(spec);
      if (!in) fail_io("cannot open " + spec);
      std::string text((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
      scenario = scenario_from_json(text);
      scenario.seed = seed;
    } else {
      scenario = scenario_from_template(spec, seed);
    }
    scenario.frames = opt_int(kv, "frames", scenario.frames);
    scenario.clutter = opt_int(kv, "clutter", scenario.clutter);
    if (opt_bool(kv, "occluder", scenario.occluder)) scenario.occluder = true;
    synth_write_video(scenario, out_dir);
  });
}

int cf_synth_batch(const char* out_dir, uint64_t seed, const char* options,
                   char** manifest_path_out) {
  return guarded([&] {
    if (!out_dir) fail_invalid("cf_synth_batch: null argument");
    const auto kv = parse_options(options);
    SynthBatchOptions batch;
    batch.train_per_class = opt_int(kv, "train", 20);
    batch.test_per_class = opt_int(kv, "test", 10);
    batch.frames = opt_int(kv, "frames", 24);
    batch.clutter = opt_int(kv, "clutter", 0);
    const std::string templates = opt_str(
        kv, "templates", "open_lf_door,close_lf_door,open_hood,close_hood,turn_left,turn_right");
    batch.templates = split_list(templates);
    if (batch.templates.empty()) fail_invalid("cf_synth_batch: empty template list");
    const std::string manifest =
        synth_batch(batch, seed, out_dir, opt_int(kv, "workers", 1));
    if (manifest_path_out) *manifest_path_out = dup_string(manifest);
  });
}

int cf_train_aog(const char* manifest_path, const char* options, const char* out_model,
                 const char* log_csv) {
  return guarded([&] {
    if (!manifest_path || !out_model) fail_invalid("cf_train_aog: null argument");
    const auto kv = parse_options(options);
    TrainAogOptions o;
    o.feature_spec = feature_spec_from(kv);
    o.train.c = opt_double(kv, "c", 1.0);
    o.train.ov = opt_double(kv, "ov", 0.5);
    o.train.radius = opt_int(kv, "radius", 2);
    o.train.outer = opt_int(kv, "outer", 5);
    o.train.stride = opt_int(kv, "stride", 3);
    o.train.seed = opt_u64(kv, "seed", 7);
    o.train.cache_capacity = opt_int(kv, "cache", 40);
    o.train.mine_background = opt_int(kv, "background", 2);
    o.train.freeze_negatives = opt_bool(kv, "freeze_negatives", false);
    o.train.workers = opt_int(kv, "workers", 1);
    o.train.solver.max_epochs = opt_int(kv, "epochs", 300);
    o.init.negatives_per_template = opt_int(kv, "init_negatives", 40);
    const auto manifest = load_manifest(manifest_path);
    const auto result = train_aog_pipeline(filter_split(manifest, "train"), o);
    save_model(result.graph, out_model);
    if (log_csv) write_train_log_csv(result.log, log_csv);
  });
}

int cf_detect(const cf_model* model, const char* video_dir, const char* annotation_path,
              const char* options, const char* out_jsonl) {
  return guarded([&] {
    if (!model || !video_dir || !out_jsonl) fail_invalid("cf_detect: null argument");
    const auto kv = parse_options(options);
    const DetectOptions o = detect_options_from(kv);
    const auto frames = load_video(video_dir);
    std::optional<VideoAnnotation> ann;
    if (annotation_path) ann = load_annotation(annotation_path);
    const auto dets = detect_video(model->graph, frames, o, ann ? &*ann : nullptr);
    save_detections_jsonl(model->graph, dets, out_jsonl);
    if (ann) save_predictions_json(dets, std::string(out_jsonl) + ".pred.json");
  });
}

int cf_track(const cf_model* model, const char* video_dir, const char* options,
             const char* out_jsonl) {
  return guarded([&] {
    if (!model || !video_dir || !out_jsonl) fail_invalid("cf_track: null argument");
    const auto kv = parse_options(options);
    const DetectOptions o = detect_options_from(kv);
    const double lambda = opt_double(kv, "lambda", 1.0);
    const double margin = opt_double(kv, "margin", 0.5);
    const auto frames = load_video(video_dir);
    const auto dets = detect_video(model->graph, frames, o, nullptr);
    const auto tracks = link_tracks(model->graph, dets, lambda, margin);
    save_tracks_jsonl(tracks, out_jsonl);
  });
}

int cf_train_fluent(const cf_model* model, const char* manifest_path, const char* options,
                    const char* out_model) {
  return guarded([&] {
    if (!model || !manifest_path || !out_model) fail_invalid("cf_train_fluent: null argument");
    const auto kv = parse_options(options);
    const FluentPipelineOptions o = fluent_options_from(kv);
    const auto manifest = load_manifest(manifest_path);
    const auto trained =
        fluent_train_pipeline(model->graph, filter_split(manifest, "train"), o);
    nlohmann::json doc;
    doc["codebook"] = {{"pca_mean", trained.codebook.pca.mean},
                       {"pca_basis", trained.codebook.pca.basis},
                       {"centroids", trained.codebook.centroids}};
    doc["labels"] = trained.model.labels;
    doc["weights"] = trained.model.weights;
    doc["bias"] = trained.model.bias;
    std::ofstream out(out_model);
    if (!out) fail_io("cannot write " + std::string(out_model));
    out << doc.dump() << "\n";
  });
}

namespace {

std::pair<Codebook, FluentModel> load_fluent_bundle(const std::string& path) {
  std::ifstream in(path);
  if (!in) fail_io("cannot open " + path);
  try {
    const nlohmann::json doc = nlohmann::json::parse(in);
    Codebook cb;
    cb.pca.mean = doc.at("codebook").at("pca_mean").get<std::vector<double>>();
    cb.pca.basis = doc.at("codebook").at("pca_basis").get<std::vector<std::vector<double>>>();
    cb.centroids = doc.at("codebook").at("centroids").get<std::vector<std::vector<double>>>();
    FluentModel model;
    model.labels = doc.at("labels").get<std::vector<std::string>>();
    model.weights = doc.at("weights").get<std::vector<std::vector<double>>>();
    model.bias = doc.at("bias").get<std::vector<double>>();
    return {std::move(cb), std::move(model)};
  } catch (const nlohmann::json::exception& e) {
    fail_parse(path + ": " + e.what());
  }
}

}  // namespace

int cf_eval_fluent(const cf_model* model, const char* fluent_model_path,
                   const char* manifest_path, const char* options, const char* out_csv,
                   double* mp_out) {
  return guarded([&] {
    if (!model || !fluent_model_path || !manifest_path)
      fail_invalid("cf_eval_fluent: null argument");
    const auto kv = parse_options(options);
    const FluentPipelineOptions o = fluent_options_from(kv);
    auto [codebook, fluent_model] = load_fluent_bundle(fluent_model_path);
    const auto manifest = load_manifest(manifest_path);
    const std::string split = opt_str(kv, "split", "test");
    const auto eval = fluent_eval_pipeline(model->graph, codebook, fluent_model,
                                           filter_split(manifest, split), o);
    if (out_csv) write_confusion_csv(eval.confusion, eval.labels, out_csv);
    if (mp_out) *mp_out = eval.confusion.mean_precision;
  });
}

int cf_eval_parts(const cf_model* model, const char* manifest_path, const char* options,
                  char** report_json) {
  return guarded([&] {
    if (!model || !manifest_path) fail_invalid("cf_eval_parts: null argument");
    const auto kv = parse_options(options);
    const DetectOptions o = detect_options_from(kv);
    const double iou = opt_double(kv, "iou", 0.5);
    const std::string split = opt_str(kv, "split", "test");
    const auto manifest = load_manifest(manifest_path);
    const auto result =
        eval_parts_pipeline(model->graph, filter_split(manifest, split), o, iou);
    nlohmann::json doc;
    doc["localization_rate"] = result.localization_rate;
    doc["status_rate"] = result.status_rate;
    doc["instances"] = result.total_instances;
    nlohmann::json per_part;
    for (const auto& [name, counts] : result.per_part) {
      per_part[name] = {{"instances", counts.instances},
                        {"localized", counts.localized},
                        {"status_correct", counts.status_correct}};
    }
    doc["per_part"] = std::move(per_part);
    if (report_json) *report_json = dup_string(doc.dump(2));
  });
}

int cf_oracle_suite(uint64_t seed, const char* out_csv, int* failures) {
  return guarded([&] {
    const auto rows = oracle::run_oracle_suite(seed);
    if (out_csv) oracle::write_suite_csv(rows, out_csv);
    int failed = 0;
    for (const auto& r : rows)
      if (!r.ok) ++failed;
    if (failures) *failures = failed;
  });
}

}  // extern "C"
