// carfluents command-line tool. Every subcommand drives the shared library
// through the C API; flag precedence is flags > config file > defaults via
// the standard CLI11 config support (key=value lines).

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>

#include "CLI11.hpp"
#include "carfluents.h"

namespace {

struct Common {
  std::uint64_t seed = 7;
  int workers = 1;
  std::string runlog;
};

int exit_code_for(int cf_code) {
  switch (cf_code) {
    case CF_OK: return 0;
    case CF_EINVAL:
    case CF_EIO:
    case CF_EPARSE: return 1;
    default: return 2;
  }
}

int finish(int cf_code, const std::string& what) {
  if (cf_code != CF_OK) {
    std::cerr << "error: " << what << ": " << cf_last_error() << "\n";
    return exit_code_for(cf_code);
  }
  return 0;
}

void write_runlog(const Common& common, const std::string& subcommand,
                  const std::string& resolved, const std::string& primary_out) {
  std::ostringstream text;
  text << "tool=" << cf_version() << "\n";
  text << "subcommand=" << subcommand << "\n";
  text << resolved;
  std::string path = common.runlog;
  if (path.empty()) path = primary_out + ".runlog";  // next to the primary output
  std::ofstream out(path);
  if (out) out << text.str();
  std::cout << text.str();
}

class OptionsBuilder {
 public:
  OptionsBuilder& add(const std::string& key, const std::string& value) {
    text_ += key + "=" + value + "\n";
    return *this;
  }
  OptionsBuilder& add(const std::string& key, double value) {
    std::ostringstream tmp;
    tmp.precision(17);
    tmp << value;
    return add(key, tmp.str());
  }
  OptionsBuilder& add(const std::string& key, int value) { return add(key, std::to_string(value)); }
  OptionsBuilder& add(const std::string& key, std::uint64_t value) {
    return add(key, std::to_string(value));
  }
  const std::string& str() const { return text_; }

 private:
  std::string text_;
};

struct ModelHandle {
  cf_model* model = nullptr;
  ~ModelHandle() { cf_model_free(model); }
};

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"carfluents: spatial-temporal And-Or graph car fluent recognition"};
  app.set_config("--config", "", "key=value config file (flags win)");
  app.require_subcommand(1);
  app.fallthrough();  // global flags (--seed, --workers) after the subcommand

  Common common;
  app.add_option("--seed", common.seed, "seed for all randomized steps")->capture_default_str();
  app.add_option("--workers", common.workers, "worker threads (results are identical for any value)")
      ->capture_default_str();
  app.add_option("--runlog", common.runlog, "path of the resolved-config run log");

  // ---- synth ----
  auto* synth = app.add_subcommand("synth", "render synthetic videos with exact annotations");
  std::string synth_template = "open_hood";
  std::string synth_out = "synth_out";
  std::string synth_benchmark;
  std::string synth_templates;
  int synth_frames = 24, synth_clutter = 0, synth_train = 20, synth_test = 10;
  bool synth_occluder = false;
  synth->add_option("--template", synth_template, "scenario template or scenario JSON path")
      ->capture_default_str();
  synth->add_option("--benchmark", synth_benchmark,
                    "render a labelled batch: 'fluents6', 'parts' or a comma list of templates");
  synth->add_option("--out", synth_out, "output directory")->capture_default_str();
  synth->add_option("--frames", synth_frames, "frames per video")->capture_default_str();
  synth->add_option("--clutter", synth_clutter, "distractor rectangles")->capture_default_str();
  synth->add_option("--train", synth_train, "train videos per class (benchmark mode)")
      ->capture_default_str();
  synth->add_option("--test", synth_test, "test videos per class (benchmark mode)")
      ->capture_default_str();
  synth->add_flag("--occluder", synth_occluder, "sweep an occluder across the scene");

  // ---- train-aog ----
  auto* train_aog = app.add_subcommand("train-aog", "latent-structural-SVM training");
  std::string ta_data, ta_out = "model.json", ta_log = "train_log.csv";
  double ta_c = 1.0, ta_ov = 0.5;
  int ta_outer = 5, ta_stride = 3, ta_radius = 2, ta_epochs = 300, ta_cache = 40, ta_bg = 2;
  bool ta_freeze = false;
  train_aog->add_option("--data", ta_data, "dataset manifest JSON")->required();
  train_aog->add_option("--out", ta_out, "output model path")->capture_default_str();
  train_aog->add_option("--log", ta_log, "objective log CSV")->capture_default_str();
  train_aog->add_option("--c", ta_c, "regularization parameter C")->capture_default_str();
  train_aog->add_option("--ov", ta_ov, "overlap threshold in the loss")->capture_default_str();
  train_aog->add_option("--outer", ta_outer, "outer CCCP iterations")->capture_default_str();
  train_aog->add_option("--stride", ta_stride, "frame-pair stride")->capture_default_str();
  train_aog->add_option("--radius", ta_radius, "latent search radius (cells)")
      ->capture_default_str();
  train_aog->add_option("--epochs", ta_epochs, "inner solver epochs")->capture_default_str();
  train_aog->add_option("--cache", ta_cache, "negative cache capacity per video")
      ->capture_default_str();
  train_aog->add_option("--background", ta_bg, "background negatives mined per pair")
      ->capture_default_str();
  train_aog->add_flag("--freeze-negatives", ta_freeze, "mine negatives only once");

  // ---- detect ----
  auto* detect = app.add_subcommand("detect", "multi-proposal detection on one video");
  std::string det_model, det_video, det_out = "detections.jsonl", det_gt;
  double det_tau = -1e12, det_nms = 0.65, det_lbp_eps = 1e-6;
  int det_topk = 5, det_stride = 3, det_lbp_iters = 20;
  detect->add_option("--model", det_model, "model JSON")->required();
  detect->add_option("--video", det_video, "video directory (frame_%04d.pgm)")->required();
  detect->add_option("--out", det_out, "detections JSONL path")->capture_default_str();
  detect->add_option("--gt", det_gt,
                     "annotation JSON; adds per-ground-truth-car predictions (<out>.pred.json)");
  detect->add_option("--tau", det_tau, "detection threshold")->capture_default_str();
  detect->add_option("--nms", det_nms, "NMS IoU threshold")->capture_default_str();
  detect->add_option("--topk", det_topk, "proposals kept per pair")->capture_default_str();
  detect->add_option("--stride", det_stride, "frame-pair stride")->capture_default_str();
  detect->add_option("--lbp-iters", det_lbp_iters, "max LBP iterations")->capture_default_str();
  detect->add_option("--lbp-eps", det_lbp_eps, "LBP convergence epsilon")->capture_default_str();

  // ---- track ----
  auto* track = app.add_subcommand("track", "link part proposals into tracks");
  std::string tr_model, tr_video, tr_out = "tracks.jsonl";
  double tr_lambda = 1.0, tr_tau = -1e12;
  int tr_topk = 5, tr_stride = 3;
  track->add_option("--model", tr_model, "model JSON")->required();
  track->add_option("--video", tr_video, "video directory")->required();
  track->add_option("--out", tr_out, "tracks JSONL path")->capture_default_str();
  track->add_option("--lambda", tr_lambda, "overlap reward weight")->capture_default_str();
  track->add_option("--tau", tr_tau, "proposal threshold")->capture_default_str();
  track->add_option("--topk", tr_topk, "proposals kept per pair")->capture_default_str();
  track->add_option("--stride", tr_stride, "frame-pair stride")->capture_default_str();

  // ---- train-fluent ----
  auto* train_fluent = app.add_subcommand("train-fluent", "train the fluent classifier");
  std::string tf_model, tf_data, tf_out = "fluent_model.json";
  int tf_k = 8;
  double tf_pca = 0.5, tf_c = 1.0, tf_lambda = 1.0;
  int tf_stride = 3, tf_topk = 5;
  train_fluent->add_option("--model", tf_model, "trained AOG model JSON")->required();
  train_fluent->add_option("--data", tf_data, "dataset manifest JSON")->required();
  train_fluent->add_option("--out", tf_out, "fluent model output path")->capture_default_str();
  train_fluent->add_option("--k", tf_k, "VLAD centroids")->capture_default_str();
  train_fluent->add_option("--pca", tf_pca, "PCA dims (fraction <= 1 or absolute)")
      ->capture_default_str();
  train_fluent->add_option("--c", tf_c, "classifier C")->capture_default_str();
  train_fluent->add_option("--lambda", tf_lambda, "track overlap reward")->capture_default_str();
  train_fluent->add_option("--stride", tf_stride, "frame-pair stride")->capture_default_str();
  train_fluent->add_option("--topk", tf_topk, "proposals kept per pair")->capture_default_str();

  // ---- eval-fluent ----
  auto* eval_fluent = app.add_subcommand("eval-fluent", "confusion matrix + mean precision");
  std::string ef_model, ef_fluent, ef_data, ef_out = "confusion.csv", ef_split = "test";
  double ef_lambda = 1.0;
  int ef_stride = 3, ef_topk = 5;
  eval_fluent->add_option("--model", ef_model, "trained AOG model JSON")->required();
  eval_fluent->add_option("--fluent-model", ef_fluent, "fluent classifier JSON")->required();
  eval_fluent->add_option("--data", ef_data, "dataset manifest JSON")->required();
  eval_fluent->add_option("--out", ef_out, "confusion CSV path")->capture_default_str();
  eval_fluent->add_option("--split", ef_split, "manifest split to evaluate")
      ->capture_default_str();
  eval_fluent->add_option("--lambda", ef_lambda, "track overlap reward")->capture_default_str();
  eval_fluent->add_option("--stride", ef_stride, "frame-pair stride")->capture_default_str();
  eval_fluent->add_option("--topk", ef_topk, "proposals kept per pair")->capture_default_str();

  // ---- eval-parts ----
  auto* eval_parts = app.add_subcommand("eval-parts", "part localization / status rates");
  std::string ep_model, ep_data, ep_split = "test", ep_out;
  double ep_iou = 0.5;
  int ep_stride = 3;
  eval_parts->add_option("--model", ep_model, "trained AOG model JSON")->required();
  eval_parts->add_option("--data", ep_data, "dataset manifest JSON")->required();
  eval_parts->add_option("--split", ep_split, "manifest split")->capture_default_str();
  eval_parts->add_option("--iou", ep_iou, "IoU threshold")->capture_default_str();
  eval_parts->add_option("--stride", ep_stride, "frame-pair stride")->capture_default_str();
  eval_parts->add_option("--out", ep_out, "write the JSON report here too");

  // ---- oracle-suite ----
  auto* oracle = app.add_subcommand("oracle-suite", "brute-force equivalence checks");
  std::string or_out = "oracle_suite.csv";
  oracle->add_option("--out", or_out, "pass/fail table CSV")->capture_default_str();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    std::cout << app.help();
    return 0;
  } catch (const CLI::ParseError& e) {
    std::cerr << e.what() << "\n" << app.help();
    return 1;
  }

  if (synth->parsed()) {
    std::error_code ec;
    std::filesystem::create_directories(synth_out, ec);  // run log lands inside
    OptionsBuilder opts;
    opts.add("frames", synth_frames).add("clutter", synth_clutter).add("workers", common.workers);
    if (!synth_benchmark.empty()) {
      std::string templates = synth_benchmark;
      if (synth_benchmark == "fluents6")
        templates = "open_lf_door,close_lf_door,open_hood,close_hood,turn_left,turn_right";
      else if (synth_benchmark == "parts")
        templates = "parts_static";
      opts.add("templates", templates).add("train", synth_train).add("test", synth_test);
      write_runlog(common, "synth", opts.str() + "out=" + synth_out + "\nseed=" +
                                        std::to_string(common.seed) + "\n",
                   synth_out + "/batch");
      char* manifest = nullptr;
      const int rc = cf_synth_batch(synth_out.c_str(), common.seed, opts.str().c_str(), &manifest);
      if (rc == CF_OK && manifest) {
        std::cout << "manifest=" << manifest << "\n";
        cf_string_free(manifest);
      }
      return finish(rc, "synth");
    }
    if (synth_occluder) opts.add("occluder", std::string("true"));
    write_runlog(common, "synth", opts.str() + "template=" + synth_template + "\nout=" +
                                      synth_out + "\nseed=" + std::to_string(common.seed) + "\n",
                 synth_out + "/video");
    return finish(cf_synth_video(synth_template.c_str(), synth_out.c_str(), common.seed,
                                 opts.str().c_str()),
                  "synth");
  }

  if (train_aog->parsed()) {
    OptionsBuilder opts;
    opts.add("c", ta_c)
        .add("ov", ta_ov)
        .add("outer", ta_outer)
        .add("stride", ta_stride)
        .add("radius", ta_radius)
        .add("epochs", ta_epochs)
        .add("cache", ta_cache)
        .add("background", ta_bg)
        .add("seed", common.seed)
        .add("workers", common.workers);
    if (ta_freeze) opts.add("freeze_negatives", std::string("true"));
    write_runlog(common, "train-aog",
                 opts.str() + "data=" + ta_data + "\nout=" + ta_out + "\n", ta_out);
    return finish(cf_train_aog(ta_data.c_str(), opts.str().c_str(), ta_out.c_str(),
                               ta_log.empty() ? nullptr : ta_log.c_str()),
                  "train-aog");
  }

  if (detect->parsed()) {
    OptionsBuilder opts;
    opts.add("tau", det_tau)
        .add("nms", det_nms)
        .add("topk", det_topk)
        .add("stride", det_stride)
        .add("lbp_iters", det_lbp_iters)
        .add("lbp_eps", det_lbp_eps)
        .add("workers", common.workers);
    write_runlog(common, "detect",
                 opts.str() + "model=" + det_model + "\nvideo=" + det_video + "\nout=" + det_out +
                     (det_gt.empty() ? "" : "\ngt=" + det_gt) + "\n",
                 det_out);
    ModelHandle handle;
    int rc = cf_model_load(det_model.c_str(), &handle.model);
    if (rc != CF_OK) return finish(rc, "detect: load model");
    rc = cf_detect(handle.model, det_video.c_str(), det_gt.empty() ? nullptr : det_gt.c_str(),
                   opts.str().c_str(), det_out.c_str());
    return finish(rc, "detect");
  }

  if (track->parsed()) {
    OptionsBuilder opts;
    opts.add("tau", tr_tau)
        .add("topk", tr_topk)
        .add("stride", tr_stride)
        .add("lambda", tr_lambda)
        .add("workers", common.workers);
    write_runlog(common, "track",
                 opts.str() + "model=" + tr_model + "\nvideo=" + tr_video + "\nout=" + tr_out +
                     "\n",
                 tr_out);
    ModelHandle handle;
    int rc = cf_model_load(tr_model.c_str(), &handle.model);
    if (rc != CF_OK) return finish(rc, "track: load model");
    rc = cf_track(handle.model, tr_video.c_str(), opts.str().c_str(), tr_out.c_str());
    return finish(rc, "track");
  }

  if (train_fluent->parsed()) {
    OptionsBuilder opts;
    opts.add("k", tf_k)
        .add("pca", tf_pca)
        .add("c", tf_c)
        .add("lambda", tf_lambda)
        .add("stride", tf_stride)
        .add("topk", tf_topk)
        .add("seed", common.seed)
        .add("workers", common.workers);
    write_runlog(common, "train-fluent",
                 opts.str() + "model=" + tf_model + "\ndata=" + tf_data + "\nout=" + tf_out +
                     "\n",
                 tf_out);
    ModelHandle handle;
    int rc = cf_model_load(tf_model.c_str(), &handle.model);
    if (rc != CF_OK) return finish(rc, "train-fluent: load model");
    rc = cf_train_fluent(handle.model, tf_data.c_str(), opts.str().c_str(), tf_out.c_str());
    return finish(rc, "train-fluent");
  }

  if (eval_fluent->parsed()) {
    OptionsBuilder opts;
    opts.add("lambda", ef_lambda)
        .add("stride", ef_stride)
        .add("topk", ef_topk)
        .add("split", ef_split)
        .add("seed", common.seed)
        .add("workers", common.workers);
    write_runlog(common, "eval-fluent",
                 opts.str() + "model=" + ef_model + "\nfluent_model=" + ef_fluent + "\ndata=" +
                     ef_data + "\nout=" + ef_out + "\n",
                 ef_out);
    ModelHandle handle;
    int rc = cf_model_load(ef_model.c_str(), &handle.model);
    if (rc != CF_OK) return finish(rc, "eval-fluent: load model");
    double mp = 0.0;
    rc = cf_eval_fluent(handle.model, ef_fluent.c_str(), ef_data.c_str(), opts.str().c_str(),
                        ef_out.c_str(), &mp);
    if (rc == CF_OK) std::cout << "mean_precision=" << mp << "\n";
    return finish(rc, "eval-fluent");
  }

  if (eval_parts->parsed()) {
    OptionsBuilder opts;
    opts.add("iou", ep_iou)
        .add("stride", ep_stride)
        .add("split", ep_split)
        .add("workers", common.workers);
    write_runlog(common, "eval-parts",
                 opts.str() + "model=" + ep_model + "\ndata=" + ep_data + "\n",
                 ep_out.empty() ? "eval-parts" : ep_out);
    ModelHandle handle;
    int rc = cf_model_load(ep_model.c_str(), &handle.model);
    if (rc != CF_OK) return finish(rc, "eval-parts: load model");
    char* report = nullptr;
    rc = cf_eval_parts(handle.model, ep_data.c_str(), opts.str().c_str(), &report);
    if (rc == CF_OK && report) {
      std::cout << report << "\n";
      if (!ep_out.empty()) {
        std::ofstream out(ep_out);
        out << report << "\n";
      }
      cf_string_free(report);
    }
    return finish(rc, "eval-parts");
  }

  if (oracle->parsed()) {
    write_runlog(common, "oracle-suite",
                 "out=" + or_out + "\nseed=" + std::to_string(common.seed) + "\n", or_out);
    int failures = 0;
    const int rc = cf_oracle_suite(common.seed, or_out.c_str(), &failures);
    if (rc == CF_OK) {
      std::cout << "failures=" << failures << "\n";
      if (failures > 0) return 2;
    }
    return finish(rc, "oracle-suite");
  }

  std::cerr << app.help();
  return 1;
}
