#include "fluent/tps.hpp"

#include "util/errors.hpp"

namespace carfluents {

int tps_local_dim(const std::vector<PartKind>& kinds, const std::vector<int>& status_counts) {
  int dim = 0;
  for (std::size_t p = 0; p < kinds.size(); ++p) {
    const int z = status_counts[p];
    dim += z + z * z + 2;
    if (kinds[p] == PartKind::light) dim += 1;
  }
  return dim;
}

std::vector<std::vector<double>> extract_tps(const std::vector<PartTrack>& tracks,
                                             const std::vector<PartKind>& kinds,
                                             const std::vector<int>& status_counts,
                                             const std::vector<Frame>& frames) {
  if (tracks.empty()) fail_invalid("extract_tps: no tracks");
  if (tracks.size() != kinds.size() || kinds.size() != status_counts.size())
    fail_invalid("extract_tps: part metadata mismatch");
  const std::size_t steps = tracks[0].chosen.size();
  for (const auto& t : tracks)
    if (t.chosen.size() != steps) fail_invalid("extract_tps: tracks cover different frames");
  if (steps < 2) fail_invalid("extract_tps: need at least two tracked frames");

  std::vector<std::vector<double>> locals;
  for (std::size_t i = 0; i + 1 < steps; ++i) {
    std::vector<double> local;
    // phi1 / phi2 / d blocks in part order, then light intensity diffs.
    for (std::size_t p = 0; p < tracks.size(); ++p) {
      const TrackProposal& a = tracks[p].chosen[i];
      const TrackProposal& b = tracks[p].chosen[i + 1];
      const int z = status_counts[p];
      if (a.status < 0 || a.status >= z || b.status < 0 || b.status >= z)
        fail_invalid("extract_tps: status outside the part vocabulary");
      for (int s = 0; s < z; ++s) local.push_back(s == a.status ? 1.0 : 0.0);
      const int flat = a.status * z + b.status;
      for (int s = 0; s < z * z; ++s) local.push_back(s == flat ? 1.0 : 0.0);
      const double scale = a.scale();
      if (scale <= 0.0) fail_invalid("extract_tps: zero-area tracked box");
      local.push_back((b.box.cx() - a.box.cx()) / scale);
      local.push_back((b.box.cy() - a.box.cy()) / scale);
    }
    for (std::size_t p = 0; p < tracks.size(); ++p) {
      if (kinds[p] != PartKind::light) continue;
      const TrackProposal& a = tracks[p].chosen[i];
      const TrackProposal& b = tracks[p].chosen[i + 1];
      if (a.frame < 0 || a.frame >= static_cast<int>(frames.size()) || b.frame < 0 ||
          b.frame >= static_cast<int>(frames.size()))
        fail_invalid("extract_tps: tracked frame outside the video");
      const double ia = mean_intensity(frames[static_cast<std::size_t>(a.frame)], a.box.x,
                                       a.box.y, a.box.w, a.box.h);
      const double ib = mean_intensity(frames[static_cast<std::size_t>(b.frame)], b.box.x,
                                       b.box.y, b.box.w, b.box.h);
      local.push_back(ib - ia);
    }
    locals.push_back(std::move(local));
  }
  return locals;
}

}  // namespace carfluents
