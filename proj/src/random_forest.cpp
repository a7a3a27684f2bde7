#include "jbshield/random_forest.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace jbshield {

void RandomForestConfig::validate(std::size_t dimension) const {
  if (n_estimators < 1) {
    throw std::invalid_argument("n_estimators must be >= 1");
  }
  if (max_depth && *max_depth < 1) {
    throw std::invalid_argument("max_depth must be >= 1 when set");
  }
  if (features_per_split) {
    if (*features_per_split < 1) {
      throw std::invalid_argument("features_per_split must be >= 1");
    }
    if (static_cast<std::size_t>(*features_per_split) > dimension) {
      throw std::invalid_argument(
          "features_per_split (" + std::to_string(*features_per_split) +
          ") exceeds the embedding dimension (" + std::to_string(dimension) +
          ")");
    }
  }
}

nlohmann::json RandomForestConfig::to_json() const {
  nlohmann::json doc;
  doc["max_depth"] = max_depth ? nlohmann::json(*max_depth) : nlohmann::json();
  doc["n_estimators"] = n_estimators;
  doc["features_per_split"] =
      features_per_split ? nlohmann::json(*features_per_split) : nlohmann::json();
  doc["seed"] = seed;
  return doc;
}

RandomForestConfig RandomForestConfig::from_json(const nlohmann::json& doc) {
  RandomForestConfig cfg;
  if (doc.contains("max_depth")) {
    cfg.max_depth = doc["max_depth"].is_null()
                        ? std::nullopt
                        : std::optional<int>(doc["max_depth"].get<int>());
  }
  if (doc.contains("n_estimators")) cfg.n_estimators = doc["n_estimators"].get<int>();
  if (doc.contains("features_per_split")) {
    cfg.features_per_split =
        doc["features_per_split"].is_null()
            ? std::nullopt
            : std::optional<int>(doc["features_per_split"].get<int>());
  }
  if (doc.contains("seed")) cfg.seed = doc["seed"].get<std::uint64_t>();
  return cfg;
}

namespace {

double gini(std::size_t n_jail, std::size_t n) {
  const double pj = static_cast<double>(n_jail) / static_cast<double>(n);
  const double pb = static_cast<double>(n - n_jail) / static_cast<double>(n);
  return 1.0 - pj * pj - pb * pb;
}

struct GiniTreeBuilder {
  const TrainMatrix& data;
  std::optional<int> max_depth;
  int features_per_split;
  SplitMix64& rng;

  DecisionTree tree;
  std::vector<std::size_t> feature_pool;
  std::vector<std::pair<float, std::uint8_t>> scratch;  // (value, label)

  GiniTreeBuilder(const TrainMatrix& d, std::optional<int> depth, int fps,
                  SplitMix64& r)
      : data(d), max_depth(depth), features_per_split(fps), rng(r) {
    feature_pool.resize(data.d);
  }

  std::int32_t make_leaf(std::size_t n_jail, std::size_t n) {
    TreeNode leaf;
    leaf.value = {static_cast<double>(n - n_jail) / static_cast<double>(n),
                  static_cast<double>(n_jail) / static_cast<double>(n)};
    tree.nodes.push_back(leaf);
    return static_cast<std::int32_t>(tree.nodes.size() - 1);
  }

  // Draw features_per_split distinct features, in draw order.
  std::span<const std::size_t> sample_features() {
    std::iota(feature_pool.begin(), feature_pool.end(), std::size_t{0});
    const std::size_t m =
        std::min<std::size_t>(static_cast<std::size_t>(features_per_split),
                              feature_pool.size());
    for (std::size_t i = 0; i < m; ++i) {
      const std::size_t j = i + rng.bounded(feature_pool.size() - i);
      std::swap(feature_pool[i], feature_pool[j]);
    }
    return {feature_pool.data(), m};
  }

  std::int32_t build(const std::vector<std::size_t>& sample, int depth) {
    const std::size_t n = sample.size();
    std::size_t n_jail = 0;
    for (std::size_t idx : sample) n_jail += data.y[idx];

    const bool at_limit = max_depth && depth >= *max_depth;
    if (n_jail == 0 || n_jail == n || n < 2 || at_limit) {
      return make_leaf(n_jail, n);
    }

    const double parent_gini = gini(n_jail, n);
    double best_gain = 0.0;
    std::int32_t best_feature = -1;
    double best_threshold = 0.0;

    for (std::size_t f : sample_features()) {
      scratch.clear();
      for (std::size_t idx : sample) {
        scratch.emplace_back(data.at(idx, f), data.y[idx]);
      }
      std::sort(scratch.begin(), scratch.end(),
                [](const auto& a, const auto& b) { return a.first < b.first; });

      // walk boundaries between distinct values with running left counts
      std::size_t left_jail = scratch[0].second;
      for (std::size_t i = 1; i < n; ++i) {
        if (scratch[i - 1].first < scratch[i].first) {
          const std::size_t nl = i;
          const std::size_t nr = n - i;
          const double gain =
              parent_gini -
              (static_cast<double>(nl) / static_cast<double>(n)) *
                  gini(left_jail, nl) -
              (static_cast<double>(nr) / static_cast<double>(n)) *
                  gini(n_jail - left_jail, nr);
          if (gain > best_gain) {
            best_gain = gain;
            best_feature = static_cast<std::int32_t>(f);
            best_threshold = (static_cast<double>(scratch[i - 1].first) +
                              static_cast<double>(scratch[i].first)) /
                             2.0;
          }
        }
        left_jail += scratch[i].second;
      }
    }

    if (best_feature < 0 || best_gain <= 0.0) {
      return make_leaf(n_jail, n);
    }

    std::vector<std::size_t> left, right;
    for (std::size_t idx : sample) {
      if (data.at(idx, static_cast<std::size_t>(best_feature)) <=
          best_threshold) {
        left.push_back(idx);
      } else {
        right.push_back(idx);
      }
    }

    TreeNode node;
    node.feature = best_feature;
    node.threshold = best_threshold;
    node.gain = best_gain;
    tree.nodes.push_back(node);
    const auto at = static_cast<std::int32_t>(tree.nodes.size() - 1);
    const std::int32_t l = build(left, depth + 1);
    const std::int32_t r = build(right, depth + 1);
    tree.nodes[static_cast<std::size_t>(at)].left = l;
    tree.nodes[static_cast<std::size_t>(at)].right = r;
    return at;
  }
};

}  // namespace

DecisionTree grow_gini_tree(const TrainMatrix& data,
                            std::span<const std::size_t> sample,
                            std::optional<int> max_depth,
                            int features_per_split, SplitMix64& rng) {
  if (sample.empty()) {
    throw std::invalid_argument("cannot grow a tree on an empty sample");
  }
  GiniTreeBuilder builder(data, max_depth, features_per_split, rng);
  std::vector<std::size_t> root(sample.begin(), sample.end());
  builder.build(root, 0);
  builder.tree.depth = builder.tree.max_node_depth();
  return std::move(builder.tree);
}

RandomForestModel RandomForestModel::train(const TrainMatrix& data,
                                           const RandomForestConfig& config) {
  config.validate(data.d);
  if (data.n < 2) {
    throw std::invalid_argument("random forest needs at least 2 examples");
  }

  const int fps = config.features_per_split.value_or(static_cast<int>(
      std::ceil(std::sqrt(static_cast<double>(data.d)))));

  RandomForestModel model;
  model.config_ = config;
  model.dimension_ = data.d;
  model.trees_.reserve(static_cast<std::size_t>(config.n_estimators));
  for (int t = 0; t < config.n_estimators; ++t) {
    SplitMix64 rng(derive_seed(config.seed, static_cast<std::uint64_t>(t)));
    std::vector<std::size_t> bootstrap(data.n);
    for (std::size_t i = 0; i < data.n; ++i) {
      bootstrap[i] = static_cast<std::size_t>(rng.bounded(data.n));
    }
    model.trees_.push_back(
        grow_gini_tree(data, bootstrap, config.max_depth, fps, rng));
  }
  return model;
}

RandomForestModel RandomForestModel::train(
    std::span<const LabeledEmbedding> data, const RandomForestConfig& config) {
  return train(TrainMatrix::from(data), config);
}

Detection RandomForestModel::predict(std::span<const float> x) const {
  check_dimension(x, dimension_);
  double sum = 0.0;
  for (const DecisionTree& tree : trees_) {
    sum += tree.route(x).value[1];
  }
  const double score = sum / static_cast<double>(trees_.size());
  return {score, score > 0.5 ? Label::Jailbreak : Label::Benign};
}

double RandomForestModel::tree_score(std::size_t tree,
                                     std::span<const float> x) const {
  check_dimension(x, dimension_);
  return trees_.at(tree).route(x).value[1];
}

nlohmann::json RandomForestModel::payload_json() const {
  nlohmann::json trees = nlohmann::json::array();
  for (const DecisionTree& t : trees_) trees.push_back(t.to_json());
  return {{"trees", std::move(trees)}};
}

RandomForestModel RandomForestModel::from_payload(
    const nlohmann::json& payload, const RandomForestConfig& config,
    std::size_t dimension) {
  RandomForestModel model;
  model.config_ = config;
  model.dimension_ = dimension;
  for (const auto& t : payload.at("trees")) {
    model.trees_.push_back(DecisionTree::from_json(t));
  }
  if (model.trees_.empty()) {
    throw std::runtime_error("forest payload holds no trees");
  }
  return model;
}

}  // namespace jbshield
