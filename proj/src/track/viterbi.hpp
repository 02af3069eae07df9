#pragma once

#include <array>
#include <cmath>
#include <string>
#include <vector>

#include "util/geometry.hpp"

namespace carfluents {

/// One part candidate on one processed frame.
struct TrackProposal {
  int frame = 0;
  BoxF box;
  int status = -1;
  double unary = 0.0;  // appearance + deformation score of the part

  double scale() const { return std::sqrt(box.w * box.h); }
};

/// (dx, dx^2, dy, dy^2, ds, ds^2): center displacement normalized by the
/// source scale, ds = ln(scale_b / scale_a). Throws on zero-area boxes.
std::array<double, 6> transition_feature(const TrackProposal& a, const TrackProposal& b);

/// Score contribution of a transition: linear terms enter as-is, squared
/// terms as penalties (theta stored as magnitudes, subtracted).
double transition_score(const std::array<double, 6>& theta, const std::array<double, 6>& feature);

struct PartTrack {
  std::string part;
  std::vector<TrackProposal> chosen;  // exactly one per processed frame
  double total_score = 0.0;
};

/// Exact DP over per-frame proposal lists maximizing
///   sum unary + sum [transition_score + lambda * IoU]
/// over consecutive processed frames. Ties prefer the earliest-frame lowest
/// proposal index. Throws if any frame has no proposals.
PartTrack viterbi_link(const std::string& part,
                       const std::vector<std::vector<TrackProposal>>& per_frame,
                       const std::array<double, 6>& theta, double lambda);

}  // namespace carfluents
