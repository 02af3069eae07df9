#include "learn/train.hpp"

#include <cmath>

#include "infer/frame_pass.hpp"
#include "learn/loss.hpp"
#include "util/errors.hpp"
#include "util/parallel.hpp"

namespace carfluents {

std::vector<int> processed_pairs(int frame_count, int stride) {
  std::vector<int> pairs;
  for (int i = 0; i + 1 < frame_count; i += std::max(1, stride)) pairs.push_back(i);
  return pairs;
}

std::pair<std::vector<double>, double> ssvm_step(const AOGraph& g, std::vector<double> theta,
                                                 const std::vector<HingeGroup>& groups, double c,
                                                 const SolverConfig& cfg) {
  const WeightLayout layout = weight_layout(g);
  auto project = [&layout](std::vector<double>& w) {
    for (const std::size_t idx : layout.positive_constrained) w[idx] = std::max(w[idx], 1e-4);
  };
  auto res = minimize_hinge(std::move(theta), groups, c, cfg, project);
  return {std::move(res.weights), res.objective};
}

namespace {

struct CachedViolator {
  std::vector<double> phi;
  double loss = 0.0;
  double last_violation = 0.0;
  std::vector<PlacedNode> signature;  // pair-0 placements, for dedupe
};

struct VideoState {
  std::vector<int> pairs;
  ParseGraph relabeled;
  std::vector<double> phi_star;
  std::vector<CachedViolator> cache;
  int fallbacks = 0;
};

bool same_placements(const std::vector<PlacedNode>& a, const std::vector<PlacedNode>& b) {
  if (a.size() != b.size()) return false;
  for (std::size_t i = 0; i < a.size(); ++i) {
    if (a[i].node_id != b[i].node_id || a[i].level != b[i].level || !(a[i].cell == b[i].cell) ||
        a[i].chosen_child != b[i].chosen_child)
      return false;
  }
  return true;
}

bool same_parse_graph(const ParseGraph& a, const ParseGraph& b) {
  if (a.trees.size() != b.trees.size()) return false;
  for (std::size_t i = 0; i < a.trees.size(); ++i)
    if (!same_placements(a.trees[i].placed, b.trees[i].placed)) return false;
  return true;
}

double dot(const std::vector<double>& a, const std::vector<double>& b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

}  // namespace

TrainResult train(AOGraph g, std::vector<TrainingSample>& samples, const TrainConfig& cfg) {
  if (samples.empty()) fail_invalid("train: no samples");
  const WeightLayout layout = weight_layout(g);

  std::vector<VideoState> states(samples.size());
  for (std::size_t v = 0; v < samples.size(); ++v) {
    states[v].pairs = processed_pairs(samples[v].annotation.frame_count, cfg.stride);
    if (states[v].pairs.empty()) fail_invalid("train: video too short for any pair");
  }

  TrainResult result;
  std::vector<double> theta = pack_weights(g);
  {
    // The floor applies from the start so transforms stay defined.
    for (const std::size_t idx : layout.positive_constrained)
      theta[idx] = std::max(theta[idx], 1e-4);
    unpack_weights(g, theta);
  }

  PairTrainConfig pcfg;
  pcfg.ov = cfg.ov;
  pcfg.radius = cfg.radius;

  // Solves on the current caches; returns the objective and violation count.
  auto solve_working_set = [&](double* objective_out) {
    std::vector<HingeGroup> groups;
    for (auto& state : states) {
      // Evict beyond capacity by lowest current violation.
      for (auto& c : state.cache)
        c.last_violation = c.loss + dot(theta, c.phi) - dot(theta, state.phi_star);
      if (static_cast<int>(state.cache.size()) > cfg.cache_capacity) {
        std::sort(state.cache.begin(), state.cache.end(),
                  [](const CachedViolator& a, const CachedViolator& b) {
                    return a.last_violation > b.last_violation;
                  });
        state.cache.resize(static_cast<std::size_t>(cfg.cache_capacity));
      }
      HingeGroup group;
      for (const auto& c : state.cache) {
        HingeTerm term;
        term.margin = c.loss;
        term.direction.resize(layout.total);
        for (std::size_t i = 0; i < layout.total; ++i)
          term.direction[i] = c.phi[i] - state.phi_star[i];
        group.terms.push_back(std::move(term));
      }
      if (!group.terms.empty()) groups.push_back(std::move(group));
    }
    SolverConfig scfg = cfg.solver;
    scfg.seed = cfg.seed;
    auto [new_theta, objective] = ssvm_step(g, theta, groups, cfg.c, scfg);
    theta = std::move(new_theta);
    unpack_weights(g, theta);
    double norm = 0.0;
    for (const double w : theta) norm += w * w;
    if (std::sqrt(norm) > 1e6) fail_runtime("train: weight norm diverged past 1e6");
    int violations = 0;
    for (const auto& group : groups) {
      double worst = 0.0;
      for (const auto& term : group.terms)
        worst = std::max(worst, term.margin + dot(theta, term.direction));
      if (worst > 1e-6) ++violations;
    }
    if (objective_out) *objective_out = objective;
    return violations;
  };

  for (int outer = 0; outer < cfg.outer; ++outer) {
    // Step 1: relabel the positives under the current weights.
    struct RelabelOut {
      ParseGraph relabeled;
      std::vector<double> phi_star;
      int fallbacks = 0;
    };
    std::vector<RelabelOut> relabel_out(samples.size());
    parallel_for(static_cast<int>(samples.size()), cfg.workers, [&](int vi) {
      const TrainingSample& sample = samples[static_cast<std::size_t>(vi)];
      const VideoState& state = states[static_cast<std::size_t>(vi)];
      RelabelOut out;
      std::vector<std::unique_ptr<FramePass>> passes(sample.frames.size());
      auto pass_of = [&](int frame) -> const FramePass& {
        auto& slot = passes[static_cast<std::size_t>(frame)];
        if (!slot)
          slot = std::make_unique<FramePass>(
              frame_pass(g, sample.pyramids[static_cast<std::size_t>(frame)]));
        return *slot;
      };
      for (const int i : state.pairs) {
        const FrameAnnotation* gt_i = sample.annotation.frame(i);
        const FrameAnnotation* gt_i1 = sample.annotation.frame(i + 1);
        if (!gt_i) fail_invalid("train: frame " + std::to_string(i) + " lacks annotation");
        PairTrainer trainer(g, pass_of(i), pass_of(i + 1),
                            sample.flows[static_cast<std::size_t>(i)], *gt_i, gt_i1, pcfg);
        bool fell_back = false;
        auto pt = trainer.relabel(i, &fell_back);
        if (!pt) fail_runtime("train: relabel failed on video " + sample.video_id);
        if (fell_back) ++out.fallbacks;
        out.relabeled.trees.push_back(std::move(*pt));
      }
      out.phi_star = joint_feature(g, out.relabeled, sample.pyramids, sample.flows);
      relabel_out[static_cast<std::size_t>(vi)] = std::move(out);
    });

    bool relabels_changed = outer == 0;
    for (std::size_t v = 0; v < samples.size(); ++v) {
      if (outer > 0 && !same_parse_graph(states[v].relabeled, relabel_out[v].relabeled))
        relabels_changed = true;
      states[v].relabeled = std::move(relabel_out[v].relabeled);
      states[v].phi_star = std::move(relabel_out[v].phi_star);
      states[v].fallbacks += relabel_out[v].fallbacks;
    }

    // Step 2: alternate hard-negative mining and weight updates until the
    // working set stops growing (iCCCP-style cache growth).
    double objective = 0.0;
    int violations = 0;
    const int rounds = cfg.freeze_negatives ? (outer == 0 ? 1 : 0) : cfg.mine_rounds;
    for (int round = 0; round < rounds; ++round) {
      struct MineOut {
        std::vector<std::pair<std::vector<double>, double>> mined;
        std::vector<std::vector<PlacedNode>> signatures;
      };
      std::vector<MineOut> mine_out(samples.size());
      parallel_for(static_cast<int>(samples.size()), cfg.workers, [&](int vi) {
        const TrainingSample& sample = samples[static_cast<std::size_t>(vi)];
        const VideoState& state = states[static_cast<std::size_t>(vi)];
        MineOut out;
        std::vector<std::unique_ptr<FramePass>> passes(sample.frames.size());
        auto pass_of = [&](int frame) -> const FramePass& {
          auto& slot = passes[static_cast<std::size_t>(frame)];
          if (!slot)
            slot = std::make_unique<FramePass>(
                frame_pass(g, sample.pyramids[static_cast<std::size_t>(frame)]));
          return *slot;
        };
        const int topk = std::max(1, cfg.mine_topk);
        const std::size_t total_variants = static_cast<std::size_t>(topk) +
                                           static_cast<std::size_t>(cfg.mine_near) +
                                           static_cast<std::size_t>(cfg.mine_background);
        std::vector<ParseGraph> violator_graphs(total_variants);
        for (const int i : state.pairs) {
          const FrameAnnotation* gt_i = sample.annotation.frame(i);
          const FrameAnnotation* gt_i1 = sample.annotation.frame(i + 1);
          PairTrainer trainer(g, pass_of(i), pass_of(i + 1),
                              sample.flows[static_cast<std::size_t>(i)], *gt_i, gt_i1, pcfg);
          const auto aug = trainer.loss_augmented_topk(i, topk);
          for (int k = 0; k < topk; ++k) {
            violator_graphs[static_cast<std::size_t>(k)].trees.push_back(
                k < static_cast<int>(aug.size()) ? aug[static_cast<std::size_t>(k)]
                                                 : aug.front());
          }
          const auto near = trainer.near_violators(i, cfg.mine_near);
          for (int k = 0; k < cfg.mine_near; ++k) {
            violator_graphs[static_cast<std::size_t>(topk + k)].trees.push_back(
                k < static_cast<int>(near.size()) ? near[static_cast<std::size_t>(k)]
                                                  : aug.front());
          }
          const auto far = trainer.far_negatives(i, cfg.mine_background);
          for (int k = 0; k < cfg.mine_background; ++k) {
            violator_graphs[static_cast<std::size_t>(topk + cfg.mine_near + k)].trees.push_back(
                k < static_cast<int>(far.size()) ? far[static_cast<std::size_t>(k)]
                                                 : aug.front());
          }
        }
        for (auto& vg : violator_graphs) {
          out.mined.emplace_back(joint_feature(g, vg, sample.pyramids, sample.flows),
                                 video_loss_vs_annotation(vg, sample.annotation, cfg.ov));
          std::vector<PlacedNode> signature;
          for (const auto& t : vg.trees)
            signature.insert(signature.end(), t.placed.begin(), t.placed.end());
          out.signatures.push_back(std::move(signature));
        }
        mine_out[static_cast<std::size_t>(vi)] = std::move(out);
      });

      // The working set is saturated once no freshly mined parse violates
      // its margin. Candidates inside a small slack band still enter the
      // cache so the next solve pre-empts the active set's neighbors.
      double max_violation = 0.0;
      int added = 0;
      for (std::size_t v = 0; v < samples.size(); ++v) {
        VideoState& state = states[v];
        MineOut& out = mine_out[v];
        for (std::size_t m = 0; m < out.mined.size(); ++m) {
          auto& [phi, loss] = out.mined[m];
          const double violation = loss + dot(theta, phi) - dot(theta, state.phi_star);
          max_violation = std::max(max_violation, violation);
          if (violation <= -0.05) continue;
          bool dup = false;
          for (const auto& c : state.cache)
            if (same_placements(c.signature, out.signatures[m])) dup = true;
          if (dup) continue;
          CachedViolator cv;
          cv.phi = std::move(phi);
          cv.loss = loss;
          cv.signature = std::move(out.signatures[m]);
          state.cache.push_back(std::move(cv));
          ++added;
        }
      }
      if (max_violation <= 1e-7) {
        result.mining_saturated = true;
        violations = solve_working_set(&objective);
        break;
      }
      result.mining_saturated = false;
      (void)added;
      violations = solve_working_set(&objective);
    }
    if (rounds == 0) violations = solve_working_set(&objective);

    int cache_total = 0;
    for (const auto& state : states) cache_total += static_cast<int>(state.cache.size());
    result.log.push_back(TrainLogRow{outer, objective, violations, cache_total});

    if (!relabels_changed && outer > 0) {
      result.relabels_converged = true;
      if (cfg.freeze_negatives || result.mining_saturated) break;
    }
  }

  for (const auto& state : states) result.fallbacks += state.fallbacks;
  result.graph = std::move(g);
  return result;
}

}  // namespace carfluents
