#pragma once

#include <array>
#include <string>
#include <vector>

#include "pyr/features.hpp"
#include "util/geometry.hpp"

namespace carfluents {

enum class NodeType { terminal, and_node, or_node };

enum class PartKind { none, panel, light };

/// Stable status vocabularies. Panels: open / close / occluded.
/// Lights: on / off / occluded. Indices are serialization-stable.
inline constexpr int kStatusOpen = 0;   // lights: on
inline constexpr int kStatusClose = 1;  // lights: off
inline constexpr int kStatusOccluded = 2;

const std::vector<std::string>& status_tokens(PartKind kind);
int status_index_from_token(PartKind kind, const std::string& token);  // throws on unknown
PartKind part_kind_from_token(const std::string& token);

struct Node {
  NodeType type = NodeType::or_node;
  int id = -1;
  int layer = 0;
  std::string tag;

  std::vector<int> children;  // ordered; composition edges E_S

  // Or-node: one bias per child (compatibility prior).
  std::vector<double> child_bias;

  // And-node bias b_A.
  double bias = 0.0;

  // Terminal template: tw x th cells over `channels` feature channels.
  int tw = 0, th = 0, channels = 0;
  std::vector<double> appearance;            // tw*th*channels
  std::array<double, 4> deformation{0.0, 0.05, 0.0, 0.05};  // (dx, dx^2, dy, dy^2)
  int scale_factor = 0;                      // sigma_t: 0 same level, 1 one octave finer
  int anchor_x = 0, anchor_y = 0;            // a_{t|A}, cells relative to parent placement

  // Lateral self-link across consecutive frames (E_M membership).
  bool temporal = false;
  double temporal_weight = 0.0;  // theta_M >= 0, applied as a penalty magnitude

  // Semantic annotations used by the car model; optional for generic graphs.
  int view_id = -1;
  int type_id = -1;
  std::string part_name;            // part Or-nodes
  PartKind part_kind = PartKind::none;
  int status_index = -1;            // status branches under a part Or-node
  bool is_body = false;             // terminal whose window defines the car box

  bool is_terminal() const { return type == NodeType::terminal; }
  bool is_and() const { return type == NodeType::and_node; }
  bool is_or() const { return type == NodeType::or_node; }
};

struct PartSpec {
  std::string name;
  PartKind kind = PartKind::panel;
  int status_count = 3;  // z_p

  // Eq.-(6)-style transition weights (dx, dx^2, dy, dy^2, ds, ds^2) used by
  // the part HMM at linking time. Squared entries act as penalty magnitudes.
  std::array<double, 6> hmm_weights{0.0, 0.05, 0.0, 0.05, 0.0, 0.05};
};

struct FeatureSpec {
  int cell_size = 4;
  int interval = 1;
  int min_level_cells = 3;
  ChannelSpec channels;

  bool operator==(const FeatureSpec&) const = default;
};

/// The ST-AOG: nodes + spatial DAG + lateral temporal links + parameters.
struct AOGraph {
  std::vector<Node> nodes;
  int root = -1;
  int view_count = 1;
  FeatureSpec feature_spec;
  std::vector<PartSpec> parts;

  const Node& node(int id) const { return nodes[static_cast<std::size_t>(id)]; }
  Node& node(int id) { return nodes[static_cast<std::size_t>(id)]; }
  int node_count() const { return static_cast<int>(nodes.size()); }

  std::vector<int> temporal_node_ids() const;

  /// Post-order over the spatial DAG from root (children before parents,
  /// each node once). Requires a validated graph.
  std::vector<int> topological_order() const;

  int part_spec_index(const std::string& name) const;  // -1 if absent
};

/// Structural invariant check; returns human-readable violations naming the
/// offending node and rule. Empty means well-formed.
std::vector<std::string> validate_graph(const AOGraph& g);

/// Flat parameter layout:
///   per terminal in node-id order: appearance block then 4 deformation weights,
///   then one temporal weight per E_M node in node-id order,
///   then biases in (node-id, child-index) order (And: b_A; Or: child biases).
struct WeightLayout {
  struct Block {
    int node = -1;
    std::size_t offset = 0;
    std::size_t size = 0;
  };
  std::vector<Block> appearance;         // per terminal
  std::vector<Block> deformation;        // per terminal, size 4
  std::vector<Block> temporal;           // per E_M node, size 1
  std::vector<Block> bias;               // per non-terminal node
  std::size_t total = 0;

  std::vector<std::size_t> positive_constrained;  // quadratic deformation + temporal slots
};

WeightLayout weight_layout(const AOGraph& g);
std::vector<double> pack_weights(const AOGraph& g);
void unpack_weights(AOGraph& g, std::span<const double> weights);  // throws on length mismatch

/// Computed deformation feature (dx, dx^2, dy, dy^2).
inline std::array<double, 4> deformation_feature(int dx, int dy) {
  return {static_cast<double>(dx), static_cast<double>(dx) * dx, static_cast<double>(dy),
          static_cast<double>(dy) * dy};
}

/// Squared temporal residual ||l - l_next + flow||^2 (penalty magnitude; the
/// score contribution is -theta_M times this).
inline double temporal_feature(Cell l, Cell l_next, Vec2f flow_at_l) {
  const double rx = static_cast<double>(l.x) - l_next.x + flow_at_l.u;
  const double ry = static_cast<double>(l.y) - l_next.y + flow_at_l.v;
  return rx * rx + ry * ry;
}

}  // namespace carfluents
