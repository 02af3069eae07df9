#include "aog/graph.hpp"

#include <algorithm>
#include <span>

#include "util/errors.hpp"

namespace carfluents {

const std::vector<std::string>& status_tokens(PartKind kind) {
  static const std::vector<std::string> panel{"open", "close", "occluded"};
  static const std::vector<std::string> light{"on", "off", "occluded"};
  static const std::vector<std::string> none{};
  switch (kind) {
    case PartKind::panel: return panel;
    case PartKind::light: return light;
    default: return none;
  }
}

int status_index_from_token(PartKind kind, const std::string& token) {
  const auto& vocab = status_tokens(kind);
  for (std::size_t i = 0; i < vocab.size(); ++i)
    if (vocab[i] == token) return static_cast<int>(i);
  fail_parse("unknown status token \"" + token + "\"");
}

PartKind part_kind_from_token(const std::string& token) {
  if (token == "panel") return PartKind::panel;
  if (token == "light") return PartKind::light;
  if (token == "none") return PartKind::none;
  fail_parse("unknown part kind \"" + token + "\"");
}

std::vector<int> AOGraph::temporal_node_ids() const {
  std::vector<int> ids;
  for (const auto& n : nodes)
    if (n.temporal) ids.push_back(n.id);
  return ids;
}

std::vector<int> AOGraph::topological_order() const {
  std::vector<int> order;
  std::vector<int> state(nodes.size(), 0);  // 0 unseen, 1 open, 2 done
  std::vector<std::pair<int, std::size_t>> stack;
  stack.emplace_back(root, 0);
  state[static_cast<std::size_t>(root)] = 1;
  while (!stack.empty()) {
    auto& [id, next] = stack.back();
    const Node& n = node(id);
    if (next < n.children.size()) {
      const int child = n.children[next++];
      if (state[static_cast<std::size_t>(child)] == 0) {
        state[static_cast<std::size_t>(child)] = 1;
        stack.emplace_back(child, 0);
      }
    } else {
      state[static_cast<std::size_t>(id)] = 2;
      order.push_back(id);
      stack.pop_back();
    }
  }
  return order;
}

int AOGraph::part_spec_index(const std::string& name) const {
  for (std::size_t i = 0; i < parts.size(); ++i)
    if (parts[i].name == name) return static_cast<int>(i);
  return -1;
}

namespace {

// DFS cycle check over spatial edges (white/gray/black coloring).
bool has_cycle_from(const AOGraph& g, int start, std::vector<int>& color) {
  std::vector<std::pair<int, std::size_t>> stack{{start, 0}};
  color[static_cast<std::size_t>(start)] = 1;
  while (!stack.empty()) {
    auto& [id, next] = stack.back();
    const Node& n = g.node(id);
    if (next < n.children.size()) {
      const int child = n.children[next++];
      if (child < 0 || child >= g.node_count()) continue;  // reported separately
      const int c = color[static_cast<std::size_t>(child)];
      if (c == 1) return true;
      if (c == 0) {
        color[static_cast<std::size_t>(child)] = 1;
        stack.emplace_back(child, 0);
      }
    } else {
      color[static_cast<std::size_t>(id)] = 2;
      stack.pop_back();
    }
  }
  return false;
}

}  // namespace

std::vector<std::string> validate_graph(const AOGraph& g) {
  std::vector<std::string> violations;
  auto report = [&](int id, const std::string& rule) {
    violations.push_back("node " + std::to_string(id) + ": " + rule);
  };

  if (g.nodes.empty()) {
    violations.push_back("graph: no nodes");
    return violations;
  }
  for (int i = 0; i < g.node_count(); ++i) {
    if (g.nodes[static_cast<std::size_t>(i)].id != i)
      report(i, "identifier must equal position (dense 0..n-1 ids)");
  }
  if (g.root < 0 || g.root >= g.node_count()) {
    violations.push_back("graph: root id out of range");
    return violations;
  }

  std::vector<int> parent_count(g.nodes.size(), 0);
  bool edges_ok = true;
  for (const auto& n : g.nodes) {
    for (int child : n.children) {
      if (child < 0 || child >= g.node_count()) {
        report(n.id, "child id " + std::to_string(child) + " does not exist");
        edges_ok = false;
      } else {
        parent_count[static_cast<std::size_t>(child)]++;
      }
    }
    switch (n.type) {
      case NodeType::terminal:
        if (!n.children.empty()) report(n.id, "terminal node must have 0 children");
        if (n.tw < 1 || n.th < 1) report(n.id, "terminal template must be at least 1x1");
        if (n.appearance.size() !=
            static_cast<std::size_t>(n.tw) * n.th * std::max(n.channels, 0))
          report(n.id, "appearance weight size does not match template dims");
        if (n.deformation[1] < 0.0 || n.deformation[3] < 0.0)
          report(n.id, "quadratic deformation weights must be >= 0");
        if (n.scale_factor != 0 && n.scale_factor != 1)
          report(n.id, "scale factor must be 0 or 1");
        break;
      case NodeType::and_node:
        if (n.children.empty()) report(n.id, "And-node must have >= 1 child");
        break;
      case NodeType::or_node:
        if (n.children.empty()) report(n.id, "Or-node must have >= 1 child");
        if (n.child_bias.size() != n.children.size())
          report(n.id, "Or-node needs one bias per child");
        break;
    }
    if (n.temporal && n.is_terminal())
      report(n.id, "temporal links are defined on And- and Or-nodes only");
    if (n.temporal_weight < 0.0) report(n.id, "temporal weight must be >= 0");
  }

  for (const auto& n : g.nodes) {
    if (n.id != g.root && parent_count[static_cast<std::size_t>(n.id)] == 0)
      report(n.id, "non-root node has no spatial parent");
  }
  if (parent_count[static_cast<std::size_t>(g.root)] != 0)
    report(g.root, "root must have no spatial parent");

  if (edges_ok) {
    std::vector<int> color(g.nodes.size(), 0);
    if (has_cycle_from(g, g.root, color))
      violations.push_back("graph: spatial edges contain a cycle");
  }
  return violations;
}

WeightLayout weight_layout(const AOGraph& g) {
  WeightLayout layout;
  std::size_t off = 0;
  for (const auto& n : g.nodes) {
    if (!n.is_terminal()) continue;
    const std::size_t app = static_cast<std::size_t>(n.tw) * n.th * n.channels;
    layout.appearance.push_back({n.id, off, app});
    off += app;
    layout.deformation.push_back({n.id, off, 4});
    layout.positive_constrained.push_back(off + 1);  // dx^2
    layout.positive_constrained.push_back(off + 3);  // dy^2
    off += 4;
  }
  for (const auto& n : g.nodes) {
    if (!n.temporal) continue;
    layout.temporal.push_back({n.id, off, 1});
    layout.positive_constrained.push_back(off);
    off += 1;
  }
  for (const auto& n : g.nodes) {
    if (n.is_and()) {
      layout.bias.push_back({n.id, off, 1});
      off += 1;
    } else if (n.is_or()) {
      layout.bias.push_back({n.id, off, n.children.size()});
      off += n.children.size();
    }
  }
  layout.total = off;
  return layout;
}

std::vector<double> pack_weights(const AOGraph& g) {
  const WeightLayout layout = weight_layout(g);
  std::vector<double> w(layout.total, 0.0);
  for (const auto& blk : layout.appearance) {
    const Node& n = g.node(blk.node);
    std::copy(n.appearance.begin(), n.appearance.end(), w.begin() + blk.offset);
  }
  for (const auto& blk : layout.deformation) {
    const Node& n = g.node(blk.node);
    std::copy(n.deformation.begin(), n.deformation.end(), w.begin() + blk.offset);
  }
  for (const auto& blk : layout.temporal) w[blk.offset] = g.node(blk.node).temporal_weight;
  for (const auto& blk : layout.bias) {
    const Node& n = g.node(blk.node);
    if (n.is_and()) {
      w[blk.offset] = n.bias;
    } else {
      std::copy(n.child_bias.begin(), n.child_bias.end(), w.begin() + blk.offset);
    }
  }
  return w;
}

void unpack_weights(AOGraph& g, std::span<const double> weights) {
  const WeightLayout layout = weight_layout(g);
  if (weights.size() != layout.total)
    fail_invalid("unpack_weights: expected " + std::to_string(layout.total) + " weights, got " +
                 std::to_string(weights.size()));
  for (const auto& blk : layout.appearance) {
    Node& n = g.node(blk.node);
    n.appearance.assign(weights.begin() + blk.offset, weights.begin() + blk.offset + blk.size);
  }
  for (const auto& blk : layout.deformation) {
    Node& n = g.node(blk.node);
    for (std::size_t i = 0; i < 4; ++i) n.deformation[i] = weights[blk.offset + i];
  }
  for (const auto& blk : layout.temporal) g.node(blk.node).temporal_weight = weights[blk.offset];
  for (const auto& blk : layout.bias) {
    Node& n = g.node(blk.node);
    if (n.is_and()) {
      n.bias = weights[blk.offset];
    } else {
      n.child_bias.assign(weights.begin() + blk.offset, weights.begin() + blk.offset + blk.size);
    }
  }
}

}  // namespace carfluents
