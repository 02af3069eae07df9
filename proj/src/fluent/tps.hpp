#pragma once

#include <vector>

#include "aog/graph.hpp"
#include "pyr/frame.hpp"
#include "track/viterbi.hpp"

namespace carfluents {

/// Temporal part-status descriptors: one local vector per consecutive pair of
/// tracked frames, concatenating per part (track order) the one-hot status
/// phi1 (z_p), the one-hot transition phi2 (z_p^2) and the scale-normalized
/// center displacement d (2), then one mean-intensity difference per light
/// part. Tracks must share the same processed-frame sequence; throws on
/// missing frames or out-of-vocabulary statuses.
std::vector<std::vector<double>> extract_tps(const std::vector<PartTrack>& tracks,
                                             const std::vector<PartKind>& kinds,
                                             const std::vector<int>& status_counts,
                                             const std::vector<Frame>& frames);

/// Descriptor length for a fixed part vocabulary.
int tps_local_dim(const std::vector<PartKind>& kinds, const std::vector<int>& status_counts);

}  // namespace carfluents
