#include "aog/model_json.hpp"

#include <fstream>

#include "json.hpp"
#include "util/errors.hpp"

namespace carfluents {

namespace {

using nlohmann::json;

std::string type_token(NodeType t) {
  switch (t) {
    case NodeType::terminal: return "terminal";
    case NodeType::and_node: return "and";
    case NodeType::or_node: return "or";
  }
  return "?";
}

NodeType type_from_token(const std::string& s) {
  if (s == "terminal") return NodeType::terminal;
  if (s == "and") return NodeType::and_node;
  if (s == "or") return NodeType::or_node;
  fail_parse("unknown node type \"" + s + "\"");
}

std::string kind_token(PartKind k) {
  switch (k) {
    case PartKind::panel: return "panel";
    case PartKind::light: return "light";
    default: return "none";
  }
}

}  // namespace

std::string model_to_json(const AOGraph& g) {
  json doc;
  doc["layout_version"] = kModelLayoutVersion;

  json nodes = json::array();
  json spatial = json::array();
  json temporal = json::array();
  for (const auto& n : g.nodes) {
    json jn;
    jn["id"] = n.id;
    jn["type"] = type_token(n.type);
    jn["layer"] = n.layer;
    if (!n.tag.empty()) jn["tag"] = n.tag;
    if (n.is_terminal()) {
      jn["w"] = n.tw;
      jn["h"] = n.th;
      jn["channels"] = n.channels;
      jn["sigma"] = n.scale_factor;
      jn["anchor"] = {n.anchor_x, n.anchor_y};
      if (n.is_body) jn["body"] = true;
    }
    if (n.view_id >= 0) jn["view"] = n.view_id;
    if (n.type_id >= 0) jn["car_type"] = n.type_id;
    if (!n.part_name.empty()) {
      jn["part"] = n.part_name;
      jn["kind"] = kind_token(n.part_kind);
    }
    if (n.status_index >= 0) jn["status"] = n.status_index;
    nodes.push_back(std::move(jn));
    for (int child : n.children) spatial.push_back({n.id, child});
    if (n.temporal) temporal.push_back(n.id);
  }
  doc["nodes"] = std::move(nodes);
  doc["edges"] = {{"spatial", std::move(spatial)}};
  doc["temporal"] = std::move(temporal);
  doc["root"] = g.root;
  doc["weights"] = pack_weights(g);

  json meta;
  meta["view_count"] = g.view_count;
  meta["feature_spec"] = {{"cell_size", g.feature_spec.cell_size},
                          {"interval", g.feature_spec.interval},
                          {"min_level_cells", g.feature_spec.min_level_cells},
                          {"orientation_bins", g.feature_spec.channels.orientation_bins},
                          {"intensity_channel", g.feature_spec.channels.intensity_channel}};
  json parts = json::array();
  for (const auto& p : g.parts) {
    parts.push_back({{"name", p.name},
                     {"kind", kind_token(p.kind)},
                     {"status_count", p.status_count},
                     {"hmm_weights", p.hmm_weights}});
  }
  meta["parts"] = std::move(parts);
  doc["meta"] = std::move(meta);
  return doc.dump(2);
}

AOGraph model_from_json(const std::string& text) {
  json doc;
  try {
    doc = json::parse(text);
  } catch (const json::exception& e) {
    fail_parse(std::string("model: ") + e.what());
  }
  try {
    if (doc.at("layout_version").get<int>() != kModelLayoutVersion)
      fail_parse("model: unsupported layout_version");
    AOGraph g;
    g.root = doc.at("root").get<int>();
    for (const auto& jn : doc.at("nodes")) {
      Node n;
      n.id = jn.at("id").get<int>();
      n.type = type_from_token(jn.at("type").get<std::string>());
      n.layer = jn.value("layer", 0);
      n.tag = jn.value("tag", std::string{});
      if (n.is_terminal()) {
        n.tw = jn.at("w").get<int>();
        n.th = jn.at("h").get<int>();
        n.channels = jn.at("channels").get<int>();
        n.scale_factor = jn.value("sigma", 0);
        const auto anchor = jn.at("anchor");
        n.anchor_x = anchor.at(0).get<int>();
        n.anchor_y = anchor.at(1).get<int>();
        n.is_body = jn.value("body", false);
        n.appearance.assign(static_cast<std::size_t>(n.tw) * n.th * n.channels, 0.0);
      }
      n.view_id = jn.value("view", -1);
      n.type_id = jn.value("car_type", -1);
      n.part_name = jn.value("part", std::string{});
      if (!n.part_name.empty()) n.part_kind = part_kind_from_token(jn.at("kind").get<std::string>());
      n.status_index = jn.value("status", -1);
      if (static_cast<int>(g.nodes.size()) != n.id) fail_parse("model: node ids must be dense and ordered");
      g.nodes.push_back(std::move(n));
    }
    for (const auto& e : doc.at("edges").at("spatial")) {
      const int parent = e.at(0).get<int>();
      const int child = e.at(1).get<int>();
      if (parent < 0 || parent >= g.node_count()) fail_parse("model: spatial edge parent out of range");
      g.node(parent).children.push_back(child);
    }
    for (auto& n : g.nodes)
      if (n.is_or()) n.child_bias.assign(n.children.size(), 0.0);
    for (const auto& t : doc.at("temporal")) {
      const int id = t.get<int>();
      if (id < 0 || id >= g.node_count()) fail_parse("model: temporal id out of range");
      g.node(id).temporal = true;
    }

    const auto& meta = doc.at("meta");
    g.view_count = meta.value("view_count", 1);
    const auto& fs = meta.at("feature_spec");
    g.feature_spec.cell_size = fs.at("cell_size").get<int>();
    g.feature_spec.interval = fs.at("interval").get<int>();
    g.feature_spec.min_level_cells = fs.at("min_level_cells").get<int>();
    g.feature_spec.channels.orientation_bins = fs.at("orientation_bins").get<int>();
    g.feature_spec.channels.intensity_channel = fs.at("intensity_channel").get<bool>();
    for (const auto& jp : meta.at("parts")) {
      PartSpec p;
      p.name = jp.at("name").get<std::string>();
      p.kind = part_kind_from_token(jp.at("kind").get<std::string>());
      p.status_count = jp.at("status_count").get<int>();
      const auto& hw = jp.at("hmm_weights");
      for (std::size_t i = 0; i < 6; ++i) p.hmm_weights[i] = hw.at(i).get<double>();
      g.parts.push_back(std::move(p));
    }

    const auto weights = doc.at("weights").get<std::vector<double>>();
    unpack_weights(g, weights);
    return g;
  } catch (const json::exception& e) {
    fail_parse(std::string("model: ") + e.what());
  }
}

void save_model(const AOGraph& g, const std::string& path) {
  std::ofstream out(path);
  if (!out) fail_io("cannot write " + path);
  out << model_to_json(g) << "\n";
}

AOGraph load_model(const std::string& path) {
  std::ifstream in(path);
  if (!in) fail_io("cannot open " + path);
  std::string text((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return model_from_json(text);
}

}  // namespace carfluents
