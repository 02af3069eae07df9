#include "learn/init.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <set>

#include "fluent/kmeans.hpp"
#include "learn/solver.hpp"
#include "pyr/flow.hpp"
#include "util/errors.hpp"
#include "util/rng.hpp"

namespace carfluents {

void prepare_sample(TrainingSample& sample, const FeatureSpec& spec) {
  sample.pyramids.clear();
  sample.flows.clear();
  for (const auto& frame : sample.frames)
    sample.pyramids.push_back(build_pyramid(frame, spec.cell_size, spec.interval,
                                            spec.min_level_cells, spec.channels));
  for (std::size_t i = 0; i + 1 < sample.frames.size(); ++i) {
    const FlowGrid level0 =
        estimate_flow(sample.frames[i], sample.frames[i + 1], spec.cell_size, 2, 3);
    sample.flows.push_back(flow_pyramid(level0, sample.pyramids[i]));
  }
  if (!sample.frames.empty()) sample.flows.resize(sample.frames.size());  // last stays empty
}

std::vector<double> window_features(const FeatureGrid& grid, Cell cell, int tw, int th) {
  const int x0 = std::clamp(cell.x, 0, std::max(0, grid.width() - tw));
  const int y0 = std::clamp(cell.y, 0, std::max(0, grid.height() - th));
  std::vector<double> out;
  out.reserve(static_cast<std::size_t>(tw) * th * grid.channels());
  for (int wy = 0; wy < th; ++wy)
    for (int wx = 0; wx < tw; ++wx) {
      const auto c = grid.cell(std::min(x0 + wx, grid.width() - 1),
                               std::min(y0 + wy, grid.height() - 1));
      for (int ch = 0; ch < grid.channels(); ++ch) out.push_back(c[ch]);
    }
  return out;
}

namespace {

struct Exemplar {
  const TrainingSample* sample;
  int frame;
  BoxF box;        // part or car box in pixels
  BoxF car_box;
  double aspect() const { return box.w / std::max(1.0, box.h); }
};

struct ClusterSpec {
  int status = -1;
  std::vector<const Exemplar*> members;
};

// Median template dims in cells (at level 0), at least 1x1.
std::pair<int, int> median_dims(const std::vector<const Exemplar*>& members, int cell_size) {
  std::vector<double> ws, hs;
  for (const auto* e : members) {
    ws.push_back(e->box.w / cell_size);
    hs.push_back(e->box.h / cell_size);
  }
  std::sort(ws.begin(), ws.end());
  std::sort(hs.begin(), hs.end());
  const int tw = std::max(1, static_cast<int>(std::lround(ws[ws.size() / 2])));
  const int th = std::max(1, static_cast<int>(std::lround(hs[hs.size() / 2])));
  return {tw, th};
}

Cell median_anchor(const std::vector<const Exemplar*>& members, int cell_size) {
  std::vector<int> xs, ys;
  for (const auto* e : members) {
    xs.push_back(static_cast<int>(std::lround((e->box.x - e->car_box.x) / cell_size)));
    ys.push_back(static_cast<int>(std::lround((e->box.y - e->car_box.y) / cell_size)));
  }
  std::sort(xs.begin(), xs.end());
  std::sort(ys.begin(), ys.end());
  return Cell{xs[xs.size() / 2], ys[ys.size() / 2]};
}

// Margin classifier on exemplar windows vs random negatives. A
// single-exemplar cluster degenerates to the normalized exemplar direction.
std::vector<double> train_template(const std::vector<const Exemplar*>& members, int tw, int th,
                                   const InitConfig& cfg, Rng& rng, bool part_window) {
  std::vector<std::vector<double>> pos, neg;
  for (const auto* e : members) {
    const auto& grid = e->sample->pyramids[static_cast<std::size_t>(e->frame)].levels[0].features;
    const int cell_size = e->sample->pyramids[0].cell_size;
    const Cell c{static_cast<int>(std::lround(e->box.x / cell_size)),
                 static_cast<int>(std::lround(e->box.y / cell_size))};
    pos.push_back(window_features(grid, c, tw, th));
  }
  const std::size_t dim = pos[0].size();
  if (pos.size() == 1) {
    double norm = 0.0;
    for (const double v : pos[0]) norm += v * v;
    norm = std::sqrt(norm);
    std::vector<double> out = pos[0];
    if (norm > 0.0)
      for (auto& v : out) v /= norm;
    return out;
  }
  int guard = 0;
  while (static_cast<int>(neg.size()) < cfg.negatives_per_template && guard++ < 1000) {
    const Exemplar* e = members[static_cast<std::size_t>(rng.next_int(
        static_cast<int>(members.size())))];
    const auto& grid = e->sample->pyramids[static_cast<std::size_t>(e->frame)].levels[0].features;
    if (grid.width() <= tw || grid.height() <= th) break;
    const Cell c{rng.next_int(grid.width() - tw + 1), rng.next_int(grid.height() - th + 1)};
    const int cell_size = e->sample->pyramids[0].cell_size;
    const BoxF cand{static_cast<double>(c.x * cell_size), static_cast<double>(c.y * cell_size),
                    static_cast<double>(tw * cell_size), static_cast<double>(th * cell_size)};
    const BoxF& avoid = part_window ? e->box : e->car_box;
    if (box_iou(cand, avoid) > 0.1) continue;
    neg.push_back(window_features(grid, c, tw, th));
  }

  std::vector<HingeGroup> groups;
  auto add = [&](const std::vector<double>& x, double y) {
    HingeTerm term;
    term.margin = 1.0;
    term.direction.resize(dim);
    for (std::size_t i = 0; i < dim; ++i) term.direction[i] = -y * x[i];
    groups.push_back(HingeGroup{{std::move(term)}});
  };
  for (const auto& x : pos) add(x, 1.0);
  for (const auto& x : neg) add(x, -1.0);
  SolverConfig scfg;
  scfg.seed = cfg.seed;
  const auto res =
      minimize_hinge(std::vector<double>(dim, 0.0), groups, cfg.template_c, scfg, nullptr);
  return res.weights;
}

}  // namespace

AOGraph init_templates(const std::vector<TrainingSample>& samples, const InitConfig& cfg,
                       std::vector<std::string>* pruned) {
  if (samples.empty()) fail_invalid("init_templates: no samples");
  for (const auto& s : samples)
    if (s.pyramids.empty()) fail_invalid("init_templates: call prepare_sample first");

  Rng rng(cfg.seed);
  const int cell_size = cfg.feature_spec.cell_size;
  const int channels = cfg.feature_spec.channels.channels();

  // (view, type) -> car exemplars; (view, part) -> (status -> exemplars).
  std::map<std::pair<int, int>, std::vector<Exemplar>> cars;
  std::map<int, std::map<std::string, PartKind>> view_parts;
  std::map<std::tuple<int, std::string, int>, std::vector<Exemplar>> part_groups;
  for (const auto& s : samples) {
    for (const auto& fa : s.annotation.frames) {
      cars[{fa.view, fa.car_type}].push_back(
          Exemplar{&s, fa.frame, fa.car_box, fa.car_box});
      for (const auto& p : fa.parts) {
        view_parts[fa.view][p.name] = p.kind;
        part_groups[{fa.view, p.name, p.status}].push_back(
            Exemplar{&s, fa.frame, p.box, fa.car_box});
      }
    }
  }

  AOGraph g;
  g.feature_spec = cfg.feature_spec;
  Node root;
  root.type = NodeType::or_node;
  root.id = 0;
  root.tag = "root";
  root.layer = 0;
  g.nodes.push_back(root);
  g.root = 0;

  std::set<int> views;
  for (const auto& [key, v] : cars) {
    (void)v;
    views.insert(key.first);
  }
  g.view_count = static_cast<int>(views.size());

  std::set<std::string> part_names_done;
  for (int view : views) {
    Node view_or;
    view_or.type = NodeType::or_node;
    view_or.id = g.node_count();
    view_or.tag = "view:" + std::to_string(view);
    view_or.view_id = view;
    view_or.layer = 1;
    const int view_id = view_or.id;
    g.nodes.push_back(std::move(view_or));
    g.node(0).children.push_back(view_id);
    g.node(0).child_bias.push_back(0.0);

    for (const auto& [key, exemplars] : cars) {
      if (key.first != view) continue;
      Node car;
      car.type = NodeType::and_node;
      car.id = g.node_count();
      car.tag = "car:" + std::to_string(view) + ":" + std::to_string(key.second);
      car.layer = 2;
      car.view_id = view;
      car.type_id = key.second;
      car.temporal = true;
      car.temporal_weight = cfg.initial_temporal_weight;
      const int car_id = car.id;
      g.nodes.push_back(std::move(car));
      g.node(view_id).children.push_back(car_id);
      g.node(view_id).child_bias.push_back(0.0);

      // Body template.
      std::vector<const Exemplar*> body_members;
      for (const auto& e : exemplars) body_members.push_back(&e);
      const auto [bw, bh] = median_dims(body_members, cell_size);
      Node body;
      body.type = NodeType::terminal;
      body.id = g.node_count();
      body.tag = "body";
      body.layer = 3;
      body.tw = bw;
      body.th = bh;
      body.channels = channels;
      body.is_body = true;
      body.appearance = train_template(body_members, bw, bh, cfg, rng, false);
      body.deformation = {0.0, 0.05, 0.0, 0.05};
      const int body_id = body.id;
      g.nodes.push_back(std::move(body));
      g.node(car_id).children.push_back(body_id);

      for (const auto& [pname, pkind] : view_parts[view]) {
        Node part;
        part.type = NodeType::or_node;
        part.id = g.node_count();
        part.tag = "part:" + pname;
        part.layer = 3;
        part.part_name = pname;
        part.part_kind = pkind;
        part.temporal = true;
        part.temporal_weight = cfg.initial_temporal_weight;
        const int part_id = part.id;
        g.nodes.push_back(std::move(part));
        g.node(car_id).children.push_back(part_id);

        const int z = static_cast<int>(status_tokens(pkind).size());
        bool any_branch = false;
        for (int status = 0; status < z; ++status) {
          auto it = part_groups.find({view, pname, status});
          if (it == part_groups.end() || it->second.empty()) {
            if (pruned)
              pruned->push_back("view " + std::to_string(view) + " part " + pname + " status " +
                                status_tokens(pkind)[static_cast<std::size_t>(status)] +
                                ": no exemplars, branch pruned");
            continue;
          }
          std::vector<const Exemplar*> members;
          for (const auto& e : it->second) members.push_back(&e);

          // "Open" exemplars split by aspect ratio (elbow-capped k-means).
          std::vector<std::vector<const Exemplar*>> clusters;
          if (status == kStatusOpen && pkind == PartKind::panel &&
              static_cast<int>(members.size()) >= 2) {
            std::vector<std::vector<double>> aspects;
            for (const auto* e : members) aspects.push_back({e->aspect()});
            const int k = elbow_k(aspects, cfg.aspect_k_cap, cfg.seed);
            const auto km = kmeans(aspects, k, cfg.seed);
            clusters.resize(static_cast<std::size_t>(k));
            for (std::size_t i = 0; i < members.size(); ++i)
              clusters[static_cast<std::size_t>(km.assignment[i])].push_back(members[i]);
            std::erase_if(clusters, [](const auto& c) { return c.empty(); });
          } else {
            clusters.push_back(members);
          }

          for (const auto& cluster : clusters) {
            const auto [tw, th] = median_dims(cluster, cell_size);
            const Cell anchor = median_anchor(cluster, cell_size);
            Node t;
            t.type = NodeType::terminal;
            t.id = g.node_count();
            t.tag = pname + ":" + status_tokens(pkind)[static_cast<std::size_t>(status)];
            t.layer = 4;
            t.tw = tw;
            t.th = th;
            t.channels = channels;
            t.status_index = status;
            t.anchor_x = anchor.x;
            t.anchor_y = anchor.y;
            t.appearance = train_template(cluster, tw, th, cfg, rng, true);
            t.deformation = {0.0, 0.05, 0.0, 0.05};
            const int tid = t.id;
            g.nodes.push_back(std::move(t));
            g.node(part_id).children.push_back(tid);
            g.node(part_id).child_bias.push_back(0.0);
            any_branch = true;
          }
        }
        if (!any_branch)
          fail_invalid("init_templates: part " + pname + " has no exemplars at all");
      }
    }
  }

  for (const auto& [view, parts] : view_parts) {
    (void)view;
    for (const auto& [pname, pkind] : parts) {
      if (part_names_done.count(pname)) continue;
      part_names_done.insert(pname);
      PartSpec spec;
      spec.name = pname;
      spec.kind = pkind;
      spec.status_count = static_cast<int>(status_tokens(pkind).size());
      g.parts.push_back(std::move(spec));
    }
  }

  const auto violations = validate_graph(g);
  if (!violations.empty()) fail_runtime("init_templates built an invalid graph: " + violations.front());
  return g;
}

}  // namespace carfluents
