#pragma once

#include "aog/parse.hpp"
#include "data/annotation.hpp"

namespace carfluents {

/// 0/1 frame loss between two parse summaries: 1 on view or car-type
/// mismatch, else 1 when the minimum box IoU over all nodes (car plus
/// same-name parts) is below ov, else 1 when any part status differs.
int frame_loss(const ParseTree& pt, const ParseTree& other, double ov);

/// Same rule against a ground-truth frame annotation.
int frame_loss_vs_annotation(const ParseTree& pt, const FrameAnnotation& gt, double ov);

/// Mean of frame losses; throws on length mismatch.
double video_loss(const ParseGraph& a, const ParseGraph& b, double ov);

double video_loss_vs_annotation(const ParseGraph& pg, const VideoAnnotation& ann, double ov);

}  // namespace carfluents
