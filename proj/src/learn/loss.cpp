#include "learn/loss.hpp"

#include "util/errors.hpp"

namespace carfluents {

namespace {

const PartObservation* find_part(const ParseTree& pt, const std::string& name) {
  for (const auto& p : pt.parts)
    if (p.name == name) return &p;
  return nullptr;
}

}  // namespace

int frame_loss(const ParseTree& pt, const ParseTree& other, double ov) {
  if (pt.view_id != other.view_id || pt.type_id != other.type_id) return 1;
  if (box_iou(pt.car_box, other.car_box) < ov) return 1;
  for (const auto& p : other.parts) {
    const PartObservation* mine = find_part(pt, p.name);
    if (!mine) return 1;
    if (box_iou(mine->box, p.box) < ov) return 1;
  }
  for (const auto& p : other.parts) {
    const PartObservation* mine = find_part(pt, p.name);
    if (mine && mine->status != p.status) return 1;
  }
  return 0;
}

int frame_loss_vs_annotation(const ParseTree& pt, const FrameAnnotation& gt, double ov) {
  if (pt.view_id != gt.view || pt.type_id != gt.car_type) return 1;
  if (box_iou(pt.car_box, gt.car_box) < ov) return 1;
  for (const auto& p : gt.parts) {
    const PartObservation* mine = find_part(pt, p.name);
    if (!mine) return 1;
    if (box_iou(mine->box, p.box) < ov) return 1;
  }
  for (const auto& p : gt.parts) {
    const PartObservation* mine = find_part(pt, p.name);
    if (mine && mine->status != p.status) return 1;
  }
  return 0;
}

double video_loss(const ParseGraph& a, const ParseGraph& b, double ov) {
  if (a.trees.size() != b.trees.size()) fail_invalid("video_loss: frame count mismatch");
  if (a.trees.empty()) return 0.0;
  double total = 0.0;
  for (std::size_t i = 0; i < a.trees.size(); ++i)
    total += frame_loss(a.trees[i], b.trees[i], ov);
  return total / static_cast<double>(a.trees.size());
}

double video_loss_vs_annotation(const ParseGraph& pg, const VideoAnnotation& ann, double ov) {
  if (pg.trees.empty()) return 0.0;
  double total = 0.0;
  for (const auto& pt : pg.trees) {
    const FrameAnnotation* gt = ann.frame(pt.pair_index);
    if (!gt) fail_invalid("video_loss: no annotation for frame " + std::to_string(pt.pair_index));
    total += frame_loss_vs_annotation(pt, *gt, ov);
  }
  return total / static_cast<double>(pg.trees.size());
}

}  // namespace carfluents
