#include "track/viterbi.hpp"

#include <limits>

#include "util/errors.hpp"

namespace carfluents {

std::array<double, 6> transition_feature(const TrackProposal& a, const TrackProposal& b) {
  const double sa = a.scale();
  const double sb = b.scale();
  if (sa <= 0.0 || sb <= 0.0) fail_invalid("transition_feature: zero-area box");
  const double dx = (b.box.cx() - a.box.cx()) / sa;
  const double dy = (b.box.cy() - a.box.cy()) / sa;
  const double ds = std::log(sb / sa);
  return {dx, dx * dx, dy, dy * dy, ds, ds * ds};
}

double transition_score(const std::array<double, 6>& theta, const std::array<double, 6>& f) {
  return theta[0] * f[0] - theta[1] * f[1] + theta[2] * f[2] - theta[3] * f[3] +
         theta[4] * f[4] - theta[5] * f[5];
}

PartTrack viterbi_link(const std::string& part,
                       const std::vector<std::vector<TrackProposal>>& per_frame,
                       const std::array<double, 6>& theta, double lambda) {
  if (per_frame.empty()) fail_invalid("viterbi_link: empty frame list");
  for (const auto& frame : per_frame)
    if (frame.empty()) fail_invalid("viterbi_link: a frame has no proposals");

  const std::size_t n = per_frame.size();
  // Suffix DP so the forward walk realizes the earliest-frame lowest-index
  // tie-break exactly.
  std::vector<std::vector<double>> suffix(n);
  suffix[n - 1].assign(per_frame[n - 1].size(), 0.0);
  for (std::size_t k = 0; k < per_frame[n - 1].size(); ++k)
    suffix[n - 1][k] = per_frame[n - 1][k].unary;
  for (std::size_t i = n - 1; i-- > 0;) {
    suffix[i].assign(per_frame[i].size(), -std::numeric_limits<double>::infinity());
    for (std::size_t j = 0; j < per_frame[i].size(); ++j) {
      const TrackProposal& a = per_frame[i][j];
      double best = -std::numeric_limits<double>::infinity();
      for (std::size_t k = 0; k < per_frame[i + 1].size(); ++k) {
        const TrackProposal& b = per_frame[i + 1][k];
        const double v = transition_score(theta, transition_feature(a, b)) +
                         lambda * box_iou(a.box, b.box) + suffix[i + 1][k];
        if (v > best) best = v;
      }
      suffix[i][j] = a.unary + best;
    }
  }

  PartTrack track;
  track.part = part;
  std::size_t pick = 0;
  for (std::size_t j = 1; j < suffix[0].size(); ++j)
    if (suffix[0][j] > suffix[0][pick]) pick = j;
  track.total_score = suffix[0][pick];
  track.chosen.push_back(per_frame[0][pick]);
  for (std::size_t i = 1; i < n; ++i) {
    const TrackProposal& prev = track.chosen.back();
    std::size_t next = 0;
    double best = -std::numeric_limits<double>::infinity();
    for (std::size_t k = 0; k < per_frame[i].size(); ++k) {
      const TrackProposal& b = per_frame[i][k];
      const double v = transition_score(theta, transition_feature(prev, b)) +
                       lambda * box_iou(prev.box, b.box) + suffix[i][k];
      if (v > best) {
        best = v;
        next = k;
      }
    }
    track.chosen.push_back(per_frame[i][next]);
  }
  return track;
}

}  // namespace carfluents
