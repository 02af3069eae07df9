#include "pipeline/pipeline.hpp"

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <map>
#include <set>

#include "fluent/tps.hpp"
#include "json.hpp"
#include "learn/loss.hpp"
#include "pyr/flow.hpp"
#include "pyr/tensor.hpp"
#include "util/errors.hpp"
#include "util/parallel.hpp"

namespace carfluents {

using nlohmann::json;

std::vector<Frame> load_video(const std::string& video_dir) {
  namespace fs = std::filesystem;
  // PGM image sequence, or frame_%04d.bin intensity tensors (1 channel).
  std::vector<std::string> tensor_paths;
  std::error_code ec;
  for (const auto& entry : fs::directory_iterator(video_dir, ec)) {
    const auto name = entry.path().filename().string();
    if (name.rfind("frame_", 0) == 0 && entry.path().extension() == ".bin")
      tensor_paths.push_back(entry.path().string());
  }
  std::vector<Frame> frames;
  if (!tensor_paths.empty()) {
    std::sort(tensor_paths.begin(), tensor_paths.end());
    for (const auto& path : tensor_paths) {
      const FeatureGrid grid = load_tensor(path);
      if (grid.channels() != 1) fail_parse(path + ": frame tensors must have 1 channel");
      Frame f;
      f.index = static_cast<int>(frames.size());
      f.intensity = Grid2D<float>(grid.width(), grid.height());
      for (int y = 0; y < grid.height(); ++y)
        for (int x = 0; x < grid.width(); ++x) f.intensity.at(x, y) = grid.at(x, y, 0);
      f.clamp01();
      frames.push_back(std::move(f));
    }
    return frames;
  }
  for (const auto& path : list_video_frames(video_dir)) {
    Frame f = load_pgm(path);
    f.index = static_cast<int>(frames.size());
    frames.push_back(std::move(f));
  }
  return frames;
}

namespace {

json box_json(const BoxF& b) { return json::array({b.x, b.y, b.w, b.h}); }

BoxF box_from(const json& j) {
  return BoxF{j.at(0).get<double>(), j.at(1).get<double>(), j.at(2).get<double>(),
              j.at(3).get<double>()};
}

std::string status_token_of(PartKind kind, int status) {
  const auto& vocab = status_tokens(kind);
  if (status < 0 || status >= static_cast<int>(vocab.size())) return "unknown";
  return vocab[static_cast<std::size_t>(status)];
}

}  // namespace

VideoDetections detect_video(const AOGraph& g, const std::vector<Frame>& frames,
                             const DetectOptions& options, const VideoAnnotation* gt) {
  VideoDetections out;
  if (gt) out.video_id = gt->video_id;
  const auto pairs = processed_pairs(static_cast<int>(frames.size()), options.stride);
  if (pairs.empty()) return out;

  struct PairOut {
    std::vector<Detection> detections;
    std::optional<FramePrediction> prediction;
    bool converged = true;
  };
  std::vector<PairOut> pair_out(pairs.size());

  parallel_for(static_cast<int>(pairs.size()), options.workers, [&](int pi) {
    const int i = pairs[static_cast<std::size_t>(pi)];
    const auto& spec = g.feature_spec;
    const FeaturePyramid pyr_i = build_pyramid(frames[static_cast<std::size_t>(i)],
                                               spec.cell_size, spec.interval,
                                               spec.min_level_cells, spec.channels);
    const FeaturePyramid pyr_i1 = build_pyramid(frames[static_cast<std::size_t>(i + 1)],
                                                spec.cell_size, spec.interval,
                                                spec.min_level_cells, spec.channels);
    const FlowGrid flow0 = estimate_flow(frames[static_cast<std::size_t>(i)],
                                         frames[static_cast<std::size_t>(i + 1)],
                                         spec.cell_size, 2, 3);
    const FlowPyramid flow = flow_pyramid(flow0, pyr_i);
    const FramePass pass_i = frame_pass(g, pyr_i);
    const FramePass pass_i1 = frame_pass(g, pyr_i1);
    const PairMaps maps = st_window_score(g, pass_i, pass_i1, flow, options.lbp);

    PairOut& po = pair_out[static_cast<std::size_t>(pi)];
    po.converged = maps.converged;
    po.detections = detect_pair(maps, options.tau, options.nms_overlap, options.topk, i);

    if (gt) {
      const FrameAnnotation* fa = gt->frame(i);
      if (fa) {
        // Car box given: best root cell whose car box overlaps the truth.
        double best_score = -1e300;
        double best_iou = -1.0;
        ParseTree best_parse;
        bool found = false;
        for (int level = 0; level < pass_i.level_count(); ++level) {
          const auto* root = maps.root_map(level);
          if (!root) continue;
          for (int y = 0; y < root->height(); ++y) {
            for (int x = 0; x < root->width(); ++x) {
              const double s = root->at(x, y);
              if (!(s > -1e300)) continue;
              const auto box = root_cell_car_box(maps, level, Cell{x, y});
              if (!box) continue;
              const double iou = box_iou(*box, fa->car_box);
              const bool qualified = iou >= 0.5;
              const bool best_qualified = best_iou >= 0.5;
              bool better = false;
              if (qualified && !best_qualified) better = true;
              else if (qualified == best_qualified) {
                if (qualified) better = s > best_score;
                else better = iou > best_iou;
              }
              if (better) {
                best_parse = retrieve_parse(maps, level, Cell{x, y}, i);
                best_score = s;
                best_iou = iou;
                found = true;
              }
            }
          }
        }
        if (found) {
          FramePrediction fp;
          fp.frame = i;
          fp.car_box = best_parse.car_box;
          fp.view = best_parse.view_id;
          fp.car_type = best_parse.type_id;
          fp.score = best_parse.score;
          for (const auto& p : best_parse.parts)
            fp.parts.push_back({p.name, p.box, p.status});
          po.prediction = std::move(fp);
        }
      }
    }
  });

  for (std::size_t pi = 0; pi < pairs.size(); ++pi) {
    PairOut& po = pair_out[pi];
    if (!po.converged) out.converged = false;
    for (auto& det : po.detections) out.detections.push_back(std::move(det));
    if (po.prediction) out.predictions.push_back(std::move(*po.prediction));
  }
  return out;
}

std::vector<FrameProposals> collect_proposals(const AOGraph& g, const VideoDetections& dets,
                                              double proposal_margin) {
  // Group detections per pair, keep the near-maximal ones.
  std::map<int, std::vector<const Detection*>> by_pair;
  for (const auto& det : dets.detections) by_pair[det.pair_index].push_back(&det);
  std::vector<FrameProposals> out;
  for (const auto& [pair, list] : by_pair) {
    double top = -1e300;
    for (const auto* det : list) top = std::max(top, det->score);
    FrameProposals props;
    props.frame = pair;
    props.parts.resize(g.parts.size());
    for (const auto* det : list) {
      if (det->score < top - proposal_margin) continue;
      for (std::size_t p = 0; p < g.parts.size(); ++p) {
        const PartObservation* obs = nullptr;
        for (const auto& po : det->parse.parts)
          if (po.name == g.parts[p].name) obs = &po;
        TrackProposal tp;
        tp.frame = pair;
        if (obs) {
          tp.box = obs->box;
          tp.status = obs->status;
          tp.unary = obs->score;
        } else {
          // Part absent from this configuration (other view): treat as
          // occluded at the car box.
          tp.box = det->car_box;
          tp.status = kStatusOccluded;
          tp.unary = 0.0;
        }
        props.parts[p].push_back(tp);
      }
    }
    out.push_back(std::move(props));
  }
  return out;
}

std::vector<PartTrack> link_tracks(const AOGraph& g, const VideoDetections& dets, double lambda,
                                   double proposal_margin) {
  std::vector<PartTrack> tracks;
  const auto proposals = collect_proposals(g, dets, proposal_margin);
  if (proposals.empty()) return tracks;
  for (std::size_t p = 0; p < g.parts.size(); ++p) {
    std::vector<std::vector<TrackProposal>> per_frame;
    for (const auto& fp : proposals) {
      if (fp.parts[p].empty()) continue;
      per_frame.push_back(fp.parts[p]);
    }
    if (per_frame.empty()) continue;
    tracks.push_back(viterbi_link(g.parts[p].name, per_frame, g.parts[p].hmm_weights, lambda));
  }
  return tracks;
}

std::vector<std::vector<double>> video_tps(const AOGraph& g, const std::vector<PartTrack>& tracks,
                                           const std::vector<Frame>& frames) {
  std::vector<PartKind> kinds;
  std::vector<int> zs;
  std::vector<PartTrack> ordered;
  for (const auto& spec : g.parts) {
    const PartTrack* found = nullptr;
    for (const auto& t : tracks)
      if (t.part == spec.name) found = &t;
    if (!found) fail_invalid("video_tps: missing track for part " + spec.name);
    ordered.push_back(*found);
    kinds.push_back(spec.kind);
    zs.push_back(spec.status_count);
  }
  return extract_tps(ordered, kinds, zs, frames);
}

void save_detections_jsonl(const AOGraph& g, const VideoDetections& dets,
                           const std::string& path) {
  (void)g;
  std::ofstream out(path);
  if (!out) fail_io("cannot write " + path);
  for (const auto& det : dets.detections) {
    json rec;
    rec["pair"] = det.pair_index;
    rec["score"] = det.score;
    rec["car_box"] = box_json(det.car_box);
    rec["view"] = det.parse.view_id;
    rec["type"] = det.parse.type_id;
    json parts = json::array();
    for (const auto& p : det.parse.parts) {
      parts.push_back({{"name", p.name},
                       {"box", box_json(p.box)},
                       {"status", status_token_of(p.kind, p.status)},
                       {"score", p.score}});
    }
    rec["parts"] = std::move(parts);
    out << rec.dump() << "\n";
  }
}

void save_tracks_jsonl(const std::vector<PartTrack>& tracks, const std::string& path) {
  std::ofstream out(path);
  if (!out) fail_io("cannot write " + path);
  for (const auto& t : tracks) {
    json rec;
    rec["part"] = t.part;
    json frames = json::array();
    for (const auto& p : t.chosen) {
      frames.push_back({{"frame", p.frame},
                        {"box", box_json(p.box)},
                        {"status", p.status},
                        {"unary", p.unary}});
    }
    rec["frames"] = std::move(frames);
    rec["total_score"] = t.total_score;
    out << rec.dump() << "\n";
  }
}

std::vector<PartTrack> load_tracks_jsonl(const std::string& path, const AOGraph& g) {
  (void)g;
  std::ifstream in(path);
  if (!in) fail_io("cannot open " + path);
  std::vector<PartTrack> tracks;
  std::string line;
  try {
    while (std::getline(in, line)) {
      if (line.empty()) continue;
      const json rec = json::parse(line);
      PartTrack t;
      t.part = rec.at("part").get<std::string>();
      for (const auto& jf : rec.at("frames")) {
        TrackProposal p;
        p.frame = jf.at("frame").get<int>();
        p.box = box_from(jf.at("box"));
        p.status = jf.at("status").get<int>();
        p.unary = jf.at("unary").get<double>();
        t.chosen.push_back(p);
      }
      t.total_score = rec.at("total_score").get<double>();
      tracks.push_back(std::move(t));
    }
  } catch (const json::exception& e) {
    fail_parse(path + ": " + e.what());
  }
  return tracks;
}

void save_predictions_json(const VideoDetections& dets, const std::string& path) {
  json doc;
  doc["video_id"] = dets.video_id;
  json frames = json::array();
  for (const auto& fp : dets.predictions) {
    json jf;
    jf["frame"] = fp.frame;
    jf["car_box"] = box_json(fp.car_box);
    jf["view"] = fp.view;
    jf["car_type"] = fp.car_type;
    jf["score"] = fp.score;
    json parts = json::array();
    for (const auto& p : fp.parts)
      parts.push_back({{"name", p.name}, {"box", box_json(p.box)}, {"status", p.status}});
    jf["parts"] = std::move(parts);
    frames.push_back(std::move(jf));
  }
  doc["frames"] = std::move(frames);
  std::ofstream out(path);
  if (!out) fail_io("cannot write " + path);
  out << doc.dump(2) << "\n";
}

VideoPredictions load_predictions_json(const std::string& path) {
  std::ifstream in(path);
  if (!in) fail_io("cannot open " + path);
  try {
    const json doc = json::parse(in);
    VideoPredictions vp;
    vp.video_id = doc.at("video_id").get<std::string>();
    for (const auto& jf : doc.at("frames")) {
      FramePrediction fp;
      fp.frame = jf.at("frame").get<int>();
      fp.car_box = box_from(jf.at("car_box"));
      fp.view = jf.at("view").get<int>();
      fp.car_type = jf.at("car_type").get<int>();
      fp.score = jf.value("score", 0.0);
      for (const auto& jp : jf.at("parts")) {
        fp.parts.push_back({jp.at("name").get<std::string>(), box_from(jp.at("box")),
                            jp.at("status").get<int>()});
      }
      vp.frames.push_back(std::move(fp));
    }
    return vp;
  } catch (const json::exception& e) {
    fail_parse(path + ": " + e.what());
  }
}

void write_train_log_csv(const std::vector<TrainLogRow>& rows, const std::string& path) {
  std::ofstream out(path);
  if (!out) fail_io("cannot write " + path);
  out << "iter,objective,violations,cache_size\n";
  for (const auto& r : rows)
    out << r.iter << "," << r.objective << "," << r.violations << "," << r.cache_size << "\n";
}

void write_confusion_csv(const ConfusionResult& res, const std::vector<std::string>& labels,
                         const std::string& path) {
  std::ofstream out(path);
  if (!out) fail_io("cannot write " + path);
  out << "truth\\pred";
  for (const auto& l : labels) out << "," << l;
  out << "\n";
  for (std::size_t t = 0; t < labels.size(); ++t) {
    out << labels[t];
    for (std::size_t p = 0; p < labels.size(); ++p)
      out << "," << res.matrix.at(static_cast<int>(p), static_cast<int>(t));
    out << "\n";
  }
  out << "mean_precision," << res.mean_precision << "\n";
}

std::string synth_batch(const SynthBatchOptions& options, std::uint64_t seed,
                        const std::string& out_dir, int workers) {
  namespace fs = std::filesystem;
  fs::create_directories(out_dir);

  struct Job {
    SyntheticScenario scenario;
    std::string dir;
    std::string split;
  };
  std::vector<Job> jobs;
  for (std::size_t c = 0; c < options.templates.size(); ++c) {
    const auto& label = options.templates[c];
    const int total = options.train_per_class + options.test_per_class;
    for (int k = 0; k < total; ++k) {
      const std::uint64_t vid_seed = seed * 1000003ULL + c * 1009ULL + static_cast<std::uint64_t>(k);
      SyntheticScenario s = scenario_from_template(label, vid_seed);
      s.frames = options.frames;
      s.clutter = options.clutter;
      s.video_id = label + "_" + std::to_string(k);
      Job job;
      job.scenario = std::move(s);
      job.split = k < options.train_per_class ? "train" : "test";
      job.dir = out_dir + "/" + job.split + "_" + label + "_" + std::to_string(k);
      jobs.push_back(std::move(job));
    }
  }
  parallel_for(static_cast<int>(jobs.size()), workers,
               [&](int i) { synth_write_video(jobs[static_cast<std::size_t>(i)].scenario,
                                              jobs[static_cast<std::size_t>(i)].dir); });
  DatasetManifest manifest;
  for (const auto& job : jobs)
    manifest.push_back({job.dir, job.dir + "/annotation.json", job.split});
  const std::string manifest_path = out_dir + "/manifest.json";
  save_manifest(manifest, manifest_path);
  return manifest_path;
}

int video_fluent_label(const VideoAnnotation& ann) {
  int best = -1;
  int best_len = -1;
  for (const auto& fl : ann.fluents) {
    const int len = fl.end - fl.start;
    const int idx = fluent_label_index(fl.label);
    if (idx >= 0 && len > best_len) {
      best = idx;
      best_len = len;
    }
  }
  return best;
}

namespace {

struct VideoFeature {
  std::vector<std::vector<double>> locals;
  int label = -1;
  bool ok = false;
};

std::vector<VideoFeature> extract_video_features(const AOGraph& g, const DatasetManifest& split,
                                                 const FluentPipelineOptions& options) {
  std::vector<VideoFeature> features(split.size());
  parallel_for(static_cast<int>(split.size()), options.workers, [&](int vi) {
    const auto& entry = split[static_cast<std::size_t>(vi)];
    VideoFeature& vf = features[static_cast<std::size_t>(vi)];
    const VideoAnnotation ann = load_annotation(entry.annotation);
    const std::vector<Frame> frames = load_video(entry.video_dir);
    DetectOptions det = options.detect;
    det.workers = 1;  // video-level parallelism already in flight
    const VideoDetections dets = detect_video(g, frames, det, &ann);
    const auto tracks = link_tracks(g, dets, options.lambda, options.proposal_margin);
    if (tracks.size() != g.parts.size()) return;  // no detections at all
    vf.locals = video_tps(g, tracks, frames);
    vf.label = video_fluent_label(ann);
    vf.ok = !vf.locals.empty() && vf.label >= 0;
  });
  return features;
}

}  // namespace

FluentTrainOutput fluent_train_pipeline(const AOGraph& g, const DatasetManifest& train_split,
                                        const FluentPipelineOptions& options) {
  const auto features = extract_video_features(g, train_split, options);

  std::vector<std::vector<double>> all_locals;
  for (const auto& vf : features)
    if (vf.ok)
      for (const auto& l : vf.locals) all_locals.push_back(l);
  if (all_locals.empty()) fail_runtime("fluent_train_pipeline: no descriptors extracted");

  int pca_dim = 0;
  if (options.pca_fraction > 0.0) {
    const int full = static_cast<int>(all_locals[0].size());
    pca_dim = options.pca_fraction <= 1.0
                  ? std::max(1, static_cast<int>(options.pca_fraction * full))
                  : std::min(full, static_cast<int>(options.pca_fraction));
  }
  FluentTrainOutput out;
  out.codebook = train_codebook(all_locals, options.k, pca_dim, options.seed);

  // Class list: the fluent labels present, in canonical order.
  std::set<int> present;
  for (const auto& vf : features)
    if (vf.ok) present.insert(vf.label);
  std::vector<std::string> labels;
  std::map<int, int> to_class;
  for (const int idx : present) {
    to_class[idx] = static_cast<int>(labels.size());
    labels.push_back(fluent_labels()[static_cast<std::size_t>(idx)]);
  }

  std::vector<std::vector<double>> descriptors;
  std::vector<int> ys;
  for (const auto& vf : features) {
    if (!vf.ok) continue;
    descriptors.push_back(vlad_encode(vf.locals, out.codebook));
    ys.push_back(to_class.at(vf.label));
  }
  out.model = train_fluent(descriptors, ys, labels, options.c, options.seed);
  return out;
}

FluentEvalOutput fluent_eval_pipeline(const AOGraph& g, const Codebook& codebook,
                                      const FluentModel& model,
                                      const DatasetManifest& test_split,
                                      const FluentPipelineOptions& options) {
  const auto features = extract_video_features(g, test_split, options);
  FluentEvalOutput out;
  out.labels = model.labels;
  std::map<std::string, int> class_of;
  for (std::size_t k = 0; k < model.labels.size(); ++k)
    class_of[model.labels[k]] = static_cast<int>(k);
  for (const auto& vf : features) {
    if (!vf.ok) continue;
    const auto descriptor = vlad_encode(vf.locals, codebook);
    const auto [pred, scores] = classify(model, descriptor);
    (void)scores;
    const std::string truth_label = fluent_labels()[static_cast<std::size_t>(vf.label)];
    auto it = class_of.find(truth_label);
    if (it == class_of.end()) continue;  // class unseen at training time
    out.predictions.push_back(pred);
    out.truths.push_back(it->second);
  }
  out.confusion = confusion_and_mp(out.predictions, out.truths,
                                   static_cast<int>(model.labels.size()));
  return out;
}

TrainResult train_aog_pipeline(const DatasetManifest& train_split,
                               const TrainAogOptions& options) {
  if (train_split.empty()) fail_invalid("train_aog: empty train split");
  std::vector<TrainingSample> samples(train_split.size());
  parallel_for(static_cast<int>(train_split.size()), options.train.workers, [&](int vi) {
    const auto& entry = train_split[static_cast<std::size_t>(vi)];
    TrainingSample s;
    s.annotation = load_annotation(entry.annotation);
    s.video_id = s.annotation.video_id;
    s.frames = load_video(entry.video_dir);
    prepare_sample(s, options.feature_spec);
    samples[static_cast<std::size_t>(vi)] = std::move(s);
  });
  InitConfig icfg = options.init;
  icfg.feature_spec = options.feature_spec;
  icfg.seed = options.train.seed;
  AOGraph g = init_templates(samples, icfg);
  return train(std::move(g), samples, options.train);
}

EvalResult eval_parts_pipeline(const AOGraph& g, const DatasetManifest& split,
                               const DetectOptions& options, double iou_thresh) {
  const auto predictions = predict_parts_pipeline(g, split, options);
  std::vector<VideoAnnotation> annotations;
  for (const auto& entry : split) annotations.push_back(load_annotation(entry.annotation));
  return evaluate_parts(predictions, annotations, iou_thresh);
}

std::vector<VideoPredictions> predict_parts_pipeline(const AOGraph& g,
                                                     const DatasetManifest& split,
                                                     const DetectOptions& options) {
  std::vector<VideoPredictions> out(split.size());
  parallel_for(static_cast<int>(split.size()), options.workers, [&](int vi) {
    const auto& entry = split[static_cast<std::size_t>(vi)];
    const VideoAnnotation ann = load_annotation(entry.annotation);
    const std::vector<Frame> frames = load_video(entry.video_dir);
    DetectOptions det = options;
    det.workers = 1;
    const VideoDetections dets = detect_video(g, frames, det, &ann);
    VideoPredictions vp;
    vp.video_id = ann.video_id;
    vp.frames = dets.predictions;
    out[static_cast<std::size_t>(vi)] = std::move(vp);
  });
  return out;
}

}  // namespace carfluents
