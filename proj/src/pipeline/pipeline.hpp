#pragma once

#include <optional>
#include <string>
#include <vector>

#include "aog/model_json.hpp"
#include "data/eval.hpp"
#include "data/manifest.hpp"
#include "data/synth.hpp"
#include "fluent/classify.hpp"
#include "fluent/vlad.hpp"
#include "infer/detect.hpp"
#include "learn/train.hpp"
#include "track/viterbi.hpp"

namespace carfluents {

struct DetectOptions {
  double tau = -1e12;
  double nms_overlap = 0.65;
  int topk = 5;
  int stride = 3;
  LbpConfig lbp;
  int workers = 1;
};

/// Per-part proposal lists for one processed frame.
struct FrameProposals {
  int frame = 0;
  // [part index in graph.parts order] -> candidates
  std::vector<std::vector<TrackProposal>> parts;
};

struct VideoDetections {
  std::string video_id;
  std::vector<Detection> detections;          // NMS-kept, all pairs
  std::vector<FramePrediction> predictions;   // per-ground-truth-car mode only
  bool converged = true;
};

std::vector<Frame> load_video(const std::string& video_dir);

/// Full pair inference over a video. When `gt` is given, also emits exactly
/// one prediction per annotated car per processed pair (the car-box-given
/// protocol: the best root cell whose car box overlaps the annotation).
VideoDetections detect_video(const AOGraph& g, const std::vector<Frame>& frames,
                             const DetectOptions& options, const VideoAnnotation* gt);

/// Part tracks linked from the detections' part proposals (graph.parts
/// order). Only detections scoring within `proposal_margin` of their pair's
/// best feed the proposal pools (the near-maximal proposals the conservative
/// NMS is meant to keep).
std::vector<PartTrack> link_tracks(const AOGraph& g, const VideoDetections& dets, double lambda,
                                   double proposal_margin = 0.5);

/// TPS local descriptors for the tracked video.
std::vector<std::vector<double>> video_tps(const AOGraph& g, const std::vector<PartTrack>& tracks,
                                           const std::vector<Frame>& frames);

// --- serialization ---

void save_detections_jsonl(const AOGraph& g, const VideoDetections& dets,
                           const std::string& path);
void save_tracks_jsonl(const std::vector<PartTrack>& tracks, const std::string& path);
std::vector<PartTrack> load_tracks_jsonl(const std::string& path, const AOGraph& g);
void save_predictions_json(const VideoDetections& dets, const std::string& path);
VideoPredictions load_predictions_json(const std::string& path);
void write_train_log_csv(const std::vector<TrainLogRow>& rows, const std::string& path);
void write_confusion_csv(const ConfusionResult& res, const std::vector<std::string>& labels,
                         const std::string& path);

// --- manifest-level pipelines ---

struct SynthBatchOptions {
  int train_per_class = 20;
  int test_per_class = 10;
  int frames = 24;
  int clutter = 0;
  std::vector<std::string> templates;  // class labels to generate
};

/// Renders the batch under out_dir and writes out_dir/manifest.json.
std::string synth_batch(const SynthBatchOptions& options, std::uint64_t seed,
                        const std::string& out_dir, int workers);

struct FluentPipelineOptions {
  DetectOptions detect;
  double lambda = 1.0;
  double proposal_margin = 0.5;
  int k = 8;
  double pca_fraction = 0.5;
  double c = 1.0;
  std::uint64_t seed = 7;
  int workers = 1;
};

struct FluentTrainOutput {
  Codebook codebook;
  FluentModel model;
};

/// detect -> track -> TPS -> VLAD -> one-vs-rest over a manifest split.
FluentTrainOutput fluent_train_pipeline(const AOGraph& g, const DatasetManifest& train_split,
                                        const FluentPipelineOptions& options);

struct FluentEvalOutput {
  ConfusionResult confusion;
  std::vector<int> predictions;
  std::vector<int> truths;
  std::vector<std::string> labels;
};

FluentEvalOutput fluent_eval_pipeline(const AOGraph& g, const Codebook& codebook,
                                      const FluentModel& model,
                                      const DatasetManifest& test_split,
                                      const FluentPipelineOptions& options);

/// Video-level fluent label from the annotation (majority interval).
int video_fluent_label(const VideoAnnotation& ann);

/// Per-ground-truth-car predictions over a manifest split.
std::vector<VideoPredictions> predict_parts_pipeline(const AOGraph& g,
                                                     const DatasetManifest& split,
                                                     const DetectOptions& options);

struct TrainAogOptions {
  FeatureSpec feature_spec;
  TrainConfig train;
  InitConfig init;
};

/// Template initialization + latent-structural-SVM training over a manifest
/// split (loads frames and annotations, builds pyramids and flows).
TrainResult train_aog_pipeline(const DatasetManifest& train_split,
                               const TrainAogOptions& options);

/// Part localization / status rates over a split (car boxes given).
EvalResult eval_parts_pipeline(const AOGraph& g, const DatasetManifest& split,
                               const DetectOptions& options, double iou_thresh);

}  // namespace carfluents
