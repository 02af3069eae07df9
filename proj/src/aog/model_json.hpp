#pragma once

#include <string>

#include "aog/graph.hpp"

namespace carfluents {

inline constexpr int kModelLayoutVersion = 1;

/// Model document: {"layout_version", "nodes", "edges":{"spatial":[[p,c],..]},
/// "temporal":[ids], "weights":[...], "meta":{...}}. The weights array uses
/// the pack_weights layout; bump the version on any layout change.
void save_model(const AOGraph& g, const std::string& path);
AOGraph load_model(const std::string& path);

std::string model_to_json(const AOGraph& g);
AOGraph model_from_json(const std::string& text);

}  // namespace carfluents
