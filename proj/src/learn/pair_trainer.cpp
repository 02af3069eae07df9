#include "learn/pair_trainer.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "infer/dt.hpp"
#include "util/errors.hpp"

namespace carfluents {

namespace {

constexpr double kNegInf = -std::numeric_limits<double>::infinity();

using Mask = Grid2D<std::uint8_t>;

struct BranchTab {
  int child_index = -1;  // position among the part Or children (-1 for body)
  int term_id = -1;
  int status = -1;
  int scale = 1;
  Cell anchor;
  int qx0 = 0, qy0 = 0;
  Grid2D<double> any_v, ok_v, bad_v;
  Grid2D<Cell> any_a, ok_a, bad_a;

  double read(const Grid2D<double>& v, int cx, int cy) const {
    const int bx = scale * cx + anchor.x - qx0;
    const int by = scale * cy + anchor.y - qy0;
    if (!v.in_bounds(bx, by)) return kNegInf;
    return v.at(bx, by);
  }
  Cell read_arg(const Grid2D<Cell>& a, int cx, int cy) const {
    const int bx = scale * cx + anchor.x - qx0;
    const int by = scale * cy + anchor.y - qy0;
    if (!a.in_bounds(bx, by)) return Cell{-1, -1};
    return a.at(bx, by);
  }
};

struct Comp {
  bool is_part = false;
  int child_pos = 0;       // index among the car And children
  int part_or_id = -1;
  int term_level = 0;
  double theta = 0.0;
  std::vector<BranchTab> branches;
  Grid2D<double> tb;       // temporal fold over the part grid (parts only)
  Grid2D<Cell> tb_arg;
};

struct ConfigTables {
  int car_id = -1;
  int level = 0;
  double car_bias = 0.0;
  double path_bias = 0.0;
  std::vector<std::pair<int, int>> path;  // (Or node id, chosen child index) root -> config
  bool matches = false;
  std::vector<Comp> comps;
  Grid2D<double> tbcar;
  Grid2D<Cell> tbcar_arg;
  bool valid = false;
};

enum class Pick { ok, any, viol };

}  // namespace

struct PairTrainer::Impl {
  const AOGraph& g;
  const FramePass& pass_i;
  const FramePass& pass_i1;
  const FlowPyramid& flow_i;
  const FrameAnnotation& gt_i;
  const FrameAnnotation* gt_i1;
  PairTrainConfig cfg;

  // [mode 0=aug/free, 1=relabel][config][level]
  std::vector<std::vector<ConfigTables>> aug_tables;
  std::vector<std::vector<ConfigTables>> rel_tables;

  Impl(const AOGraph& graph, const FramePass& pi, const FramePass& pi1, const FlowPyramid& flow,
       const FrameAnnotation& gt, const FrameAnnotation* gt_next, const PairTrainConfig& c)
      : g(graph), pass_i(pi), pass_i1(pi1), flow_i(flow), gt_i(gt), gt_i1(gt_next), cfg(c) {
    std::vector<int> configs;
    for (const auto& n : g.nodes)
      if (n.is_and() && n.view_id >= 0) configs.push_back(n.id);
    if (configs.empty()) fail_invalid("pair trainer: no car configuration And-nodes");
    for (int id : configs) {
      std::vector<ConfigTables> aug_levels, rel_levels;
      for (int l = 0; l < pass_i.level_count(); ++l) {
        aug_levels.push_back(build_tables(id, l, false));
        rel_levels.push_back(build_tables(id, l, true));
      }
      aug_tables.push_back(std::move(aug_levels));
      rel_tables.push_back(std::move(rel_levels));
    }
  }

  const PartAnnotation* gt_part(const FrameAnnotation& fa, const std::string& name) const {
    for (const auto& p : fa.parts)
      if (p.name == name) return &p;
    return nullptr;
  }

  Cell cell_of_box(const BoxF& box, double ppc) const {
    return Cell{static_cast<int>(std::lround(box.x / ppc)),
                static_cast<int>(std::lround(box.y / ppc))};
  }

  // Feasible placements of a template against a ground-truth box.
  Mask iou_mask(int level, int tw, int th, const BoxF& gt_box, bool with_radius) const {
    const auto& grid = pass_i.pyramid->levels[static_cast<std::size_t>(level)].features;
    const double ppc = pass_i.pyramid->pixels_per_cell(level);
    const int w = grid.width() - tw + 1;
    const int h = grid.height() - th + 1;
    Mask mask(std::max(w, 0), std::max(h, 0), 0);
    const Cell center = cell_of_box(gt_box, ppc);
    for (int y = 0; y < mask.height(); ++y) {
      for (int x = 0; x < mask.width(); ++x) {
        if (with_radius &&
            (std::abs(x - center.x) > cfg.radius || std::abs(y - center.y) > cfg.radius))
          continue;
        const BoxF box{x * ppc, y * ppc, tw * ppc, th * ppc};
        if (box_iou(box, gt_box) >= cfg.ov) mask.at(x, y) = 1;
      }
    }
    return mask;
  }

  // Next-frame latent fold for a linked node on `grid_level`.
  void temporal_fold(int grid_level, double theta, const BoxF* next_box, bool constrained,
                     Grid2D<double>* tb, Grid2D<Cell>* arg) const {
    const auto& grid = pass_i.pyramid->levels[static_cast<std::size_t>(grid_level)].features;
    Grid2D<double> h(grid.width(), grid.height(), 0.0);
    if (constrained && next_box) {
      const double ppc = pass_i.pyramid->pixels_per_cell(grid_level);
      const Cell c = cell_of_box(*next_box, ppc);
      h.fill(kNegInf);
      for (int y = std::max(0, c.y - cfg.radius);
           y <= std::min(grid.height() - 1, c.y + cfg.radius); ++y)
        for (int x = std::max(0, c.x - cfg.radius);
             x <= std::min(grid.width() - 1, c.x + cfg.radius); ++x)
          h.at(x, y) = 0.0;
    }
    const FlowGrid* flow = grid_level < static_cast<int>(flow_i.levels.size())
                               ? &flow_i.levels[static_cast<std::size_t>(grid_level)]
                               : nullptr;
    temporal_message_gather(h, theta, flow, false, tb, arg);
  }

  ConfigTables build_tables(int car_id, int level, bool relabel_mode) const {
    const Node& car = g.node(car_id);
    ConfigTables ct;
    ct.car_id = car_id;
    ct.level = level;
    ct.car_bias = car.bias;
    ct.matches = car.view_id == gt_i.view && car.type_id == gt_i.car_type;

    // Path of Or choices from the root (tree-shaped upper layers).
    {
      std::vector<std::pair<int, int>> path;
      int node = g.root;
      while (node != car_id) {
        const Node& n = g.node(node);
        if (!n.is_or()) return ct;  // unsupported upper structure
        int pick = -1;
        for (std::size_t ci = 0; ci < n.children.size(); ++ci) {
          // Descend toward car_id.
          std::vector<int> stack{n.children[ci]};
          bool reaches = false;
          while (!stack.empty()) {
            const int cur = stack.back();
            stack.pop_back();
            if (cur == car_id) {
              reaches = true;
              break;
            }
            for (int ch : g.node(cur).children) stack.push_back(ch);
          }
          if (reaches) {
            pick = static_cast<int>(ci);
            break;
          }
        }
        if (pick < 0) return ct;
        path.emplace_back(node, pick);
        ct.path_bias += n.child_bias[static_cast<std::size_t>(pick)];
        node = n.children[static_cast<std::size_t>(pick)];
      }
      ct.path = std::move(path);
    }

    const FrameAnnotation* next = gt_i1;
    temporal_fold(level, car.temporal ? car.temporal_weight : 0.0,
                  next ? &next->car_box : nullptr, relabel_mode, &ct.tbcar, &ct.tbcar_arg);

    for (std::size_t pos = 0; pos < car.children.size(); ++pos) {
      const Node& child = g.node(car.children[pos]);
      Comp comp;
      comp.child_pos = static_cast<int>(pos);
      if (child.is_terminal()) {
        comp.is_part = false;
        comp.term_level = level - child.scale_factor * g.feature_spec.interval;
        if (comp.term_level < 0 || comp.term_level >= pass_i.level_count()) return ct;
        const auto& tm = pass_i.terms[static_cast<std::size_t>(comp.term_level)]
                                     [static_cast<std::size_t>(child.id)];
        if (!tm.ok) return ct;
        BranchTab tab;
        tab.term_id = child.id;
        tab.scale = child.scale_factor ? 2 : 1;
        tab.anchor = Cell{child.anchor_x, child.anchor_y};
        Grid2D<double> unary = tm.response;  // body carries no temporal fold
        build_branch_dts(unary, child, comp.term_level, gt_i.car_box, relabel_mode, &tab);
        comp.branches.push_back(std::move(tab));
      } else if (child.is_or() && !child.part_name.empty()) {
        comp.is_part = true;
        comp.part_or_id = child.id;
        comp.theta = child.temporal ? child.temporal_weight : 0.0;
        const PartAnnotation* part_gt = gt_part(gt_i, child.part_name);
        if (!part_gt) fail_invalid("pair trainer: annotation lacks part " + child.part_name);
        const PartAnnotation* part_next = next ? gt_part(*next, child.part_name) : nullptr;

        int term_level = -1;
        for (std::size_t ci = 0; ci < child.children.size(); ++ci) {
          const Node& branch = g.node(child.children[ci]);
          if (!branch.is_terminal())
            fail_invalid("pair trainer: part branches must be terminals");
          const int tl = level - branch.scale_factor * g.feature_spec.interval;
          if (term_level < 0) term_level = tl;
          if (tl != term_level) fail_invalid("pair trainer: part mixes scale factors");
        }
        if (term_level < 0 || term_level >= pass_i.level_count() || term_level < 0) return ct;
        comp.term_level = term_level;

        temporal_fold(term_level, comp.theta, part_next ? &part_next->box : nullptr,
                      relabel_mode, &comp.tb, &comp.tb_arg);

        for (std::size_t ci = 0; ci < child.children.size(); ++ci) {
          const Node& branch = g.node(child.children[ci]);
          const auto& tm = pass_i.terms[static_cast<std::size_t>(term_level)]
                                       [static_cast<std::size_t>(branch.id)];
          if (!tm.ok) return ct;
          BranchTab tab;
          tab.child_index = static_cast<int>(ci);
          tab.term_id = branch.id;
          tab.status = branch.status_index;
          tab.scale = branch.scale_factor ? 2 : 1;
          tab.anchor = Cell{branch.anchor_x, branch.anchor_y};
          Grid2D<double> unary(tm.response.width(), tm.response.height(), kNegInf);
          const double bias = child.child_bias[ci];
          for (int y = 0; y < unary.height(); ++y)
            for (int x = 0; x < unary.width(); ++x)
              unary.at(x, y) = tm.response.at(x, y) + bias + comp.tb.at(x, y);
          build_branch_dts(unary, branch, term_level, part_gt->box, relabel_mode, &tab);
          comp.branches.push_back(std::move(tab));
        }
      } else {
        fail_invalid("pair trainer: unsupported car child structure");
      }
      ct.comps.push_back(std::move(comp));
    }
    ct.valid = true;
    return ct;
  }

  void build_branch_dts(const Grid2D<double>& unary, const Node& term, int term_level,
                        const BoxF& gt_box, bool relabel_mode, BranchTab* tab) const {
    const auto& ref_grid = pass_i.pyramid->levels[static_cast<std::size_t>(tab->scale == 2
                                                                               ? term_level +
                                                                                     g.feature_spec
                                                                                         .interval
                                                                               : term_level)]
                               .features;
    const int qx0 = std::min(tab->anchor.x, tab->scale * (ref_grid.width() - 1) + tab->anchor.x);
    const int qx1 = std::max(tab->anchor.x, tab->scale * (ref_grid.width() - 1) + tab->anchor.x);
    const int qy0 = std::min(tab->anchor.y, tab->scale * (ref_grid.height() - 1) + tab->anchor.y);
    const int qy1 = std::max(tab->anchor.y, tab->scale * (ref_grid.height() - 1) + tab->anchor.y);
    tab->qx0 = qx0;
    tab->qy0 = qy0;
    const int qxl = qx1 - qx0 + 1;
    const int qyl = qy1 - qy0 + 1;

    const Mask feasible = iou_mask(term_level, term.tw, term.th, gt_box, relabel_mode);

    auto masked = [&](bool keep_feasible, Grid2D<double>* v, Grid2D<Cell>* a) {
      Grid2D<double> in(unary.width(), unary.height(), kNegInf);
      for (int y = 0; y < unary.height(); ++y)
        for (int x = 0; x < unary.width(); ++x) {
          const bool f = feasible.in_bounds(x, y) && feasible.at(x, y) != 0;
          if (f == keep_feasible) in.at(x, y) = unary.at(x, y);
        }
      dt_deform_to_query(in, term.deformation, qx0, qxl, qy0, qyl, v, a);
    };

    masked(true, &tab->ok_v, &tab->ok_a);
    if (!relabel_mode) {
      dt_deform_to_query(unary, term.deformation, qx0, qxl, qy0, qyl, &tab->any_v, &tab->any_a);
      masked(false, &tab->bad_v, &tab->bad_a);
    }
  }

  // Per-cell component reads. `wrong_status_ok` selects the violating pool.
  struct CompRead {
    double value = kNegInf;
    int tab = -1;
    Cell cell{-1, -1};
  };

  CompRead read_comp(const Comp& comp, Pick pick, int cx, int cy) const {
    CompRead best;
    for (std::size_t t = 0; t < comp.branches.size(); ++t) {
      const BranchTab& tab = comp.branches[t];
      const bool correct = !comp.is_part || status_matches(comp, tab);
      double v = kNegInf;
      Cell arg{-1, -1};
      switch (pick) {
        case Pick::ok:
          if (!correct) continue;
          v = tab.read(tab.ok_v, cx, cy);
          arg = tab.read_arg(tab.ok_a, cx, cy);
          break;
        case Pick::any:
          v = tab.read(tab.any_v, cx, cy);
          arg = tab.read_arg(tab.any_a, cx, cy);
          break;
        case Pick::viol:
          if (correct) {
            v = tab.read(tab.bad_v, cx, cy);
            arg = tab.read_arg(tab.bad_a, cx, cy);
          } else {
            v = tab.read(tab.any_v, cx, cy);
            arg = tab.read_arg(tab.any_a, cx, cy);
          }
          break;
      }
      if (v > best.value) {
        best.value = v;
        best.tab = static_cast<int>(t);
        best.cell = arg;
      }
    }
    return best;
  }

  bool status_matches(const Comp& comp, const BranchTab& tab) const {
    const Node& part_or = g.node(comp.part_or_id);
    const PartAnnotation* pa = gt_part(gt_i, part_or.part_name);
    return pa && tab.status == pa->status;
  }

  struct AugCandidate {
    double value = kNegInf;
    const ConfigTables* ct = nullptr;
    Cell cell{-1, -1};
    std::vector<CompRead> choices;
  };

  // Best augmented parse per (config, level, cell); calls sink(candidate).
  template <typename Sink>
  void scan_augmented(Sink&& sink) const {
    for (const auto& levels : aug_tables) {
      for (const auto& ct : levels) {
        if (!ct.valid) continue;
        const auto& grid =
            pass_i.pyramid->levels[static_cast<std::size_t>(ct.level)].features;
        for (int y = 0; y < grid.height(); ++y) {
          for (int x = 0; x < grid.width(); ++x) {
            const double base = ct.car_bias + ct.path_bias + ct.tbcar.at(x, y);

            std::vector<CompRead> any_reads(ct.comps.size());
            double any_sum = base;
            bool any_ok = true;
            for (std::size_t k = 0; k < ct.comps.size(); ++k) {
              any_reads[k] = read_comp(ct.comps[k], Pick::any, x, y);
              if (!(any_reads[k].value > kNegInf)) {
                any_ok = false;
                break;
              }
              any_sum += any_reads[k].value;
            }
            if (!any_ok) continue;

            AugCandidate cand;
            cand.ct = &ct;
            cand.cell = Cell{x, y};

            if (!ct.matches) {
              cand.value = 1.0 + any_sum;
              cand.choices = std::move(any_reads);
              sink(std::move(cand));
              continue;
            }

            std::vector<CompRead> ok_reads(ct.comps.size());
            double ok_sum = base;
            bool all_ok = true;
            for (std::size_t k = 0; k < ct.comps.size(); ++k) {
              ok_reads[k] = read_comp(ct.comps[k], Pick::ok, x, y);
              if (!(ok_reads[k].value > kNegInf)) {
                all_ok = false;
                break;
              }
              ok_sum += ok_reads[k].value;
            }

            // Best violating parse: swap the cheapest component to its best
            // violating option relative to the unconstrained optimum.
            double viol_best = kNegInf;
            std::size_t viol_k = 0;
            CompRead viol_read;
            for (std::size_t k = 0; k < ct.comps.size(); ++k) {
              const auto r = read_comp(ct.comps[k], Pick::viol, x, y);
              if (!(r.value > kNegInf)) continue;
              const double vc = any_sum - any_reads[k].value + r.value;
              if (vc > viol_best) {
                viol_best = vc;
                viol_k = k;
                viol_read = r;
              }
            }

            if (all_ok && (!(viol_best > kNegInf) || ok_sum >= 1.0 + viol_best)) {
              cand.value = ok_sum;
              cand.choices = std::move(ok_reads);
              sink(std::move(cand));
            } else if (viol_best > kNegInf) {
              cand.value = 1.0 + viol_best;
              cand.choices = std::move(any_reads);
              cand.choices[viol_k] = viol_read;
              sink(std::move(cand));
            }
          }
        }
      }
    }
  }

  ParseTree decode(const ConfigTables& ct, Cell cell, const std::vector<CompRead>& choices,
                   int pair_index) const {
    ParseTree pt;
    pt.pair_index = pair_index;
    for (const auto& [or_id, pick] : ct.path)
      pt.placed.push_back({or_id, ct.level, cell, pick});
    pt.placed.push_back({ct.car_id, ct.level, cell, -1});
    const Node& car = g.node(ct.car_id);
    if (car.temporal) {
      const Cell nc = ct.tbcar_arg.at(cell.x, cell.y);
      if (nc.x >= 0) pt.next_linked.push_back({ct.car_id, ct.level, nc, -1});
    }
    for (std::size_t k = 0; k < ct.comps.size(); ++k) {
      const Comp& comp = ct.comps[k];
      const CompRead& pickd = choices[k];
      if (pickd.tab < 0 || pickd.cell.x < 0)
        fail_runtime("pair trainer: decode hit an empty component");
      const BranchTab& tab = comp.branches[static_cast<std::size_t>(pickd.tab)];
      if (!comp.is_part) {
        pt.placed.push_back({tab.term_id, comp.term_level, pickd.cell, -1});
        continue;
      }
      pt.placed.push_back({comp.part_or_id, ct.level, cell, tab.child_index});
      pt.placed.push_back({tab.term_id, comp.term_level, pickd.cell, -1});
      const Node& part_or = g.node(comp.part_or_id);
      if (part_or.temporal) {
        const Cell nc = comp.tb_arg.at(pickd.cell.x, pickd.cell.y);
        if (nc.x >= 0) pt.next_linked.push_back({comp.part_or_id, comp.term_level, nc, -1});
      }
    }
    const FlowPyramid* flow = &flow_i;
    pt.score = score_parse_tree(g, pt, *pass_i.pyramid, flow);
    return pt;
  }
};

PairTrainer::PairTrainer(const AOGraph& g, const FramePass& pass_i, const FramePass& pass_i1,
                         const FlowPyramid& flow_i, const FrameAnnotation& gt_i,
                         const FrameAnnotation* gt_i1, const PairTrainConfig& cfg)
    : impl_(std::make_shared<Impl>(g, pass_i, pass_i1, flow_i, gt_i, gt_i1, cfg)) {}

std::optional<ParseTree> PairTrainer::relabel(int pair_index, bool* fell_back) {
  Impl& im = *impl_;
  if (fell_back) *fell_back = false;
  double best = kNegInf;
  const ConfigTables* best_ct = nullptr;
  Cell best_cell{-1, -1};
  std::vector<Impl::CompRead> best_choices;

  for (const auto& levels : im.rel_tables) {
    for (const auto& ct : levels) {
      if (!ct.valid || !ct.matches) continue;
      const double ppc = im.pass_i.pyramid->pixels_per_cell(ct.level);
      const Cell center = im.cell_of_box(im.gt_i.car_box, ppc);
      const auto& grid =
          im.pass_i.pyramid->levels[static_cast<std::size_t>(ct.level)].features;
      for (int y = std::max(0, center.y - im.cfg.radius);
           y <= std::min(grid.height() - 1, center.y + im.cfg.radius); ++y) {
        for (int x = std::max(0, center.x - im.cfg.radius);
             x <= std::min(grid.width() - 1, center.x + im.cfg.radius); ++x) {
          double acc = ct.car_bias + ct.path_bias + ct.tbcar.at(x, y);
          std::vector<Impl::CompRead> choices;
          bool ok = true;
          for (const auto& comp : ct.comps) {
            const auto r = im.read_comp(comp, Pick::ok, x, y);
            if (!(r.value > kNegInf)) {
              ok = false;
              break;
            }
            acc += r.value;
            choices.push_back(r);
          }
          if (!ok) continue;
          if (acc > best) {
            best = acc;
            best_ct = &ct;
            best_cell = Cell{x, y};
            best_choices = std::move(choices);
          }
        }
      }
    }
  }

  if (best_ct) return im.decode(*best_ct, best_cell, best_choices, pair_index);

  // Fallback: annotation cells, first status-correct branch.
  if (fell_back) *fell_back = true;
  for (const auto& levels : im.rel_tables) {
    for (const auto& ct : levels) {
      if (!ct.valid || !ct.matches) continue;
      const double ppc = im.pass_i.pyramid->pixels_per_cell(ct.level);
      const Cell center = im.cell_of_box(im.gt_i.car_box, ppc);
      const auto& grid =
          im.pass_i.pyramid->levels[static_cast<std::size_t>(ct.level)].features;
      if (!grid.empty() && center.x >= 0 && center.y >= 0 && center.x < grid.width() &&
          center.y < grid.height()) {
        std::vector<Impl::CompRead> choices;
        bool ok = true;
        for (const auto& comp : ct.comps) {
          Impl::CompRead r;
          for (std::size_t t = 0; t < comp.branches.size(); ++t) {
            const auto& tab = comp.branches[t];
            if (comp.is_part && !im.status_matches(comp, tab)) continue;
            const Node& term = im.g.node(tab.term_id);
            const BoxF* box = comp.is_part
                                  ? &im.gt_part(im.gt_i, im.g.node(comp.part_or_id).part_name)->box
                                  : &im.gt_i.car_box;
            const double tppc = im.pass_i.pyramid->pixels_per_cell(comp.term_level);
            Cell c = im.cell_of_box(*box, tppc);
            const auto& tgrid =
                im.pass_i.pyramid->levels[static_cast<std::size_t>(comp.term_level)].features;
            c.x = std::clamp(c.x, 0, std::max(0, tgrid.width() - term.tw));
            c.y = std::clamp(c.y, 0, std::max(0, tgrid.height() - term.th));
            r.tab = static_cast<int>(t);
            r.cell = c;
            break;
          }
          if (r.tab < 0) {
            ok = false;
            break;
          }
          choices.push_back(r);
        }
        if (ok) return im.decode(ct, center, choices, pair_index);
      }
    }
  }
  return std::nullopt;
}

ParseTree PairTrainer::loss_augmented(int pair_index) {
  Impl& im = *impl_;
  Impl::AugCandidate best;
  im.scan_augmented([&](Impl::AugCandidate cand) {
    if (cand.value > best.value) best = std::move(cand);
  });
  if (!best.ct) fail_runtime("loss_augmented: no feasible parse anywhere");
  return im.decode(*best.ct, best.cell, best.choices, pair_index);
}

std::vector<ParseTree> PairTrainer::loss_augmented_topk(int pair_index, int k) {
  Impl& im = *impl_;
  std::vector<Impl::AugCandidate> pool;
  im.scan_augmented([&](Impl::AugCandidate cand) { pool.push_back(std::move(cand)); });
  std::sort(pool.begin(), pool.end(),
            [](const Impl::AugCandidate& a, const Impl::AugCandidate& b) {
              if (a.value != b.value) return a.value > b.value;
              if (a.cell.y != b.cell.y) return a.cell.y < b.cell.y;
              return a.cell.x < b.cell.x;
            });
  std::vector<ParseTree> out;
  std::vector<std::pair<int, Cell>> used;  // (level, cell)
  for (const auto& cand : pool) {
    if (static_cast<int>(out.size()) >= k) break;
    bool close_by = false;
    for (const auto& [lvl, cell] : used) {
      if (lvl == cand.ct->level && std::abs(cell.x - cand.cell.x) < 3 &&
          std::abs(cell.y - cand.cell.y) < 3) {
        close_by = true;
        break;
      }
    }
    if (close_by) continue;
    out.push_back(im.decode(*cand.ct, cand.cell, cand.choices, pair_index));
    used.emplace_back(cand.ct->level, cand.cell);
  }
  return out;
}

std::vector<ParseTree> PairTrainer::near_violators(int pair_index, int count) {
  Impl& im = *impl_;
  struct Cand {
    double value;
    const ConfigTables* ct;
    Cell cell;
    std::vector<Impl::CompRead> choices;
  };
  std::vector<Cand> pool;
  for (const auto& levels : im.aug_tables) {
    for (const auto& ct : levels) {
      if (!ct.valid || !ct.matches) continue;
      const double ppc = im.pass_i.pyramid->pixels_per_cell(ct.level);
      const Cell center = im.cell_of_box(im.gt_i.car_box, ppc);
      const auto& grid =
          im.pass_i.pyramid->levels[static_cast<std::size_t>(ct.level)].features;
      const int reach = im.cfg.radius + 1;
      for (int y = std::max(0, center.y - reach);
           y <= std::min(grid.height() - 1, center.y + reach); ++y) {
        for (int x = std::max(0, center.x - reach);
             x <= std::min(grid.width() - 1, center.x + reach); ++x) {
          const double base = ct.car_bias + ct.path_bias + ct.tbcar.at(x, y);
          std::vector<Impl::CompRead> any_reads(ct.comps.size());
          double any_sum = base;
          bool ok = true;
          for (std::size_t k = 0; k < ct.comps.size(); ++k) {
            any_reads[k] = im.read_comp(ct.comps[k], Pick::any, x, y);
            if (!(any_reads[k].value > kNegInf)) {
              ok = false;
              break;
            }
            any_sum += any_reads[k].value;
          }
          if (!ok) continue;
          double viol_best = kNegInf;
          std::size_t viol_k = 0;
          Impl::CompRead viol_read;
          for (std::size_t k = 0; k < ct.comps.size(); ++k) {
            const auto r = im.read_comp(ct.comps[k], Pick::viol, x, y);
            if (!(r.value > kNegInf)) continue;
            const double cand = any_sum - any_reads[k].value + r.value;
            if (cand > viol_best) {
              viol_best = cand;
              viol_k = k;
              viol_read = r;
            }
          }
          if (!(viol_best > kNegInf)) continue;
          Cand cand;
          cand.value = viol_best;
          cand.ct = &ct;
          cand.cell = Cell{x, y};
          cand.choices = any_reads;
          cand.choices[viol_k] = viol_read;
          pool.push_back(std::move(cand));
        }
      }
    }
  }
  std::sort(pool.begin(), pool.end(), [](const Cand& a, const Cand& b) {
    if (a.value != b.value) return a.value > b.value;
    if (a.cell.y != b.cell.y) return a.cell.y < b.cell.y;
    return a.cell.x < b.cell.x;
  });
  std::vector<ParseTree> out;
  for (const auto& cand : pool) {
    if (static_cast<int>(out.size()) >= count) break;
    out.push_back(im.decode(*cand.ct, cand.cell, cand.choices, pair_index));
  }
  return out;
}

std::vector<ParseTree> PairTrainer::far_negatives(int pair_index, int count) {
  Impl& im = *impl_;
  struct Cand {
    double score;
    const ConfigTables* ct;
    Cell cell;
  };
  std::vector<Cand> cands;
  const double size = std::max(im.gt_i.car_box.w, im.gt_i.car_box.h);
  for (const auto& levels : im.aug_tables) {
    for (const auto& ct : levels) {
      if (!ct.valid) continue;
      const double ppc = im.pass_i.pyramid->pixels_per_cell(ct.level);
      const auto& grid =
          im.pass_i.pyramid->levels[static_cast<std::size_t>(ct.level)].features;
      for (int y = 0; y < grid.height(); ++y) {
        for (int x = 0; x < grid.width(); ++x) {
          const double cx = x * ppc + 0.5 * im.gt_i.car_box.w;
          const double cy = y * ppc + 0.5 * im.gt_i.car_box.h;
          const double dx = cx - im.gt_i.car_box.cx();
          const double dy = cy - im.gt_i.car_box.cy();
          if (std::sqrt(dx * dx + dy * dy) < 2.0 * size) continue;
          double acc = ct.car_bias + ct.path_bias + ct.tbcar.at(x, y);
          bool ok = true;
          for (const auto& comp : ct.comps) {
            const auto r = im.read_comp(comp, Pick::any, x, y);
            if (!(r.value > kNegInf)) {
              ok = false;
              break;
            }
            acc += r.value;
          }
          if (ok) cands.push_back({acc, &ct, Cell{x, y}});
        }
      }
    }
  }
  std::sort(cands.begin(), cands.end(), [](const Cand& a, const Cand& b) {
    if (a.score != b.score) return a.score > b.score;
    if (a.cell.y != b.cell.y) return a.cell.y < b.cell.y;
    return a.cell.x < b.cell.x;
  });
  std::vector<ParseTree> out;
  std::vector<Cell> used;
  for (const auto& c : cands) {
    if (static_cast<int>(out.size()) >= count) break;
    bool close = false;
    for (const auto& u : used)
      if (std::abs(u.x - c.cell.x) < 4 && std::abs(u.y - c.cell.y) < 4) close = true;
    if (close) continue;
    std::vector<Impl::CompRead> choices;
    for (const auto& comp : c.ct->comps) choices.push_back(im.read_comp(comp, Pick::any, c.cell.x, c.cell.y));
    out.push_back(im.decode(*c.ct, c.cell, choices, pair_index));
    used.push_back(c.cell);
  }
  return out;
}

}  // namespace carfluents
