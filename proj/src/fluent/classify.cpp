#include "fluent/classify.hpp"

#include <fstream>
#include <set>

#include "json.hpp"
#include "learn/solver.hpp"
#include "util/errors.hpp"

namespace carfluents {

FluentModel train_fluent(const std::vector<std::vector<double>>& descriptors,
                         const std::vector<int>& labels,
                         const std::vector<std::string>& label_names, double c,
                         std::uint64_t seed) {
  if (descriptors.size() != labels.size()) fail_invalid("train_fluent: label count mismatch");
  std::set<int> present(labels.begin(), labels.end());
  if (present.size() < 2) fail_invalid("train_fluent: need at least two classes");
  const int class_count = static_cast<int>(label_names.size());
  const std::size_t dim = descriptors.empty() ? 0 : descriptors[0].size();

  FluentModel model;
  model.labels = label_names;
  SolverConfig cfg;
  cfg.seed = seed;
  for (int k = 0; k < class_count; ++k) {
    std::vector<HingeGroup> groups;
    for (std::size_t i = 0; i < descriptors.size(); ++i) {
      const double y = labels[i] == k ? 1.0 : -1.0;
      HingeTerm term;
      term.margin = 1.0;
      term.direction.resize(dim + 1);
      for (std::size_t d = 0; d < dim; ++d) term.direction[d] = -y * descriptors[i][d];
      term.direction[dim] = -y;  // bias feature
      groups.push_back(HingeGroup{{std::move(term)}});
    }
    const auto res =
        minimize_hinge(std::vector<double>(dim + 1, 0.0), groups, c, cfg, nullptr);
    model.weights.push_back({res.weights.begin(), res.weights.begin() + static_cast<long>(dim)});
    model.bias.push_back(res.weights[dim]);
  }
  return model;
}

std::pair<int, std::vector<double>> classify(const FluentModel& model,
                                             const std::vector<double>& descriptor) {
  std::vector<double> scores(model.weights.size(), 0.0);
  int best = 0;
  for (std::size_t k = 0; k < model.weights.size(); ++k) {
    if (model.weights[k].size() != descriptor.size())
      fail_invalid("classify: descriptor dimension mismatch");
    double s = model.bias[k];
    for (std::size_t i = 0; i < descriptor.size(); ++i)
      s += model.weights[k][i] * descriptor[i];
    scores[k] = s;
    if (s > scores[static_cast<std::size_t>(best)]) best = static_cast<int>(k);
  }
  return {best, scores};
}

ConfusionResult confusion_and_mp(const std::vector<int>& predictions,
                                 const std::vector<int>& truths, int class_count) {
  if (predictions.size() != truths.size()) fail_invalid("confusion_and_mp: length mismatch");
  ConfusionResult res;
  res.matrix = Grid2D<double>(class_count, class_count, 0.0);
  std::vector<int> row_counts(static_cast<std::size_t>(class_count), 0);
  for (std::size_t i = 0; i < truths.size(); ++i) {
    const int t = truths[i];
    const int p = predictions[i];
    if (t < 0 || t >= class_count || p < 0 || p >= class_count)
      fail_invalid("confusion_and_mp: label out of range");
    res.matrix.at(p, t) += 1.0;
    row_counts[static_cast<std::size_t>(t)] += 1;
  }
  int populated = 0;
  for (int t = 0; t < class_count; ++t) {
    const int n = row_counts[static_cast<std::size_t>(t)];
    if (n == 0) continue;
    ++populated;
    for (int p = 0; p < class_count; ++p) res.matrix.at(p, t) /= n;
    res.mean_precision += res.matrix.at(t, t);
  }
  if (populated > 0) res.mean_precision /= populated;
  return res;
}

void save_fluent_model(const FluentModel& model, const std::string& path) {
  nlohmann::json doc;
  doc["labels"] = model.labels;
  doc["weights"] = model.weights;
  doc["bias"] = model.bias;
  std::ofstream out(path);
  if (!out) fail_io("cannot write " + path);
  out << doc.dump() << "\n";
}

FluentModel load_fluent_model(const std::string& path) {
  std::ifstream in(path);
  if (!in) fail_io("cannot open " + path);
  try {
    nlohmann::json doc = nlohmann::json::parse(in);
    FluentModel model;
    model.labels = doc.at("labels").get<std::vector<std::string>>();
    model.weights = doc.at("weights").get<std::vector<std::vector<double>>>();
    model.bias = doc.at("bias").get<std::vector<double>>();
    return model;
  } catch (const nlohmann::json::exception& e) {
    fail_parse(path + ": " + e.what());
  }
}

}  // namespace carfluents
