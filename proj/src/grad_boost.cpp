#include "jbshield/grad_boost.hpp"

#include <algorithm>
#include <cmath>

namespace jbshield {

void GradBoostConfig::validate() const {
  if (max_depth < 1) throw std::invalid_argument("max_depth must be >= 1");
  if (n_estimators < 1) {
    throw std::invalid_argument("n_estimators must be >= 1");
  }
  if (!(learning_rate > 0.0 && learning_rate <= 1.0)) {
    throw std::invalid_argument("learning_rate must be in (0,1]");
  }
  if (l2_leaf_regularization < 0.0) {
    throw std::invalid_argument("l2_leaf_regularization must be >= 0");
  }
}

nlohmann::json GradBoostConfig::to_json() const {
  return {{"max_depth", max_depth},
          {"n_estimators", n_estimators},
          {"learning_rate", learning_rate},
          {"l2_leaf_regularization", l2_leaf_regularization},
          {"seed", seed}};
}

GradBoostConfig GradBoostConfig::from_json(const nlohmann::json& doc) {
  GradBoostConfig cfg;
  if (doc.contains("max_depth")) cfg.max_depth = doc["max_depth"].get<int>();
  if (doc.contains("n_estimators")) {
    cfg.n_estimators = doc["n_estimators"].get<int>();
  }
  if (doc.contains("learning_rate")) {
    cfg.learning_rate = doc["learning_rate"].get<double>();
  }
  if (doc.contains("l2_leaf_regularization")) {
    cfg.l2_leaf_regularization = doc["l2_leaf_regularization"].get<double>();
  }
  if (doc.contains("seed")) cfg.seed = doc["seed"].get<std::uint64_t>();
  return cfg;
}

namespace {

// softplus(F) - y*F, stable for large |F|
double logistic_loss(double raw, std::uint8_t y) {
  return std::max(raw, 0.0) + std::log1p(std::exp(-std::abs(raw))) -
         static_cast<double>(y) * raw;
}

struct NewtonTreeBuilder {
  const TrainMatrix& data;
  const std::vector<double>& grad;
  const std::vector<double>& hess;
  double lambda;
  int max_depth;

  DecisionTree tree;
  std::vector<std::tuple<float, double, double>> scratch;  // (value, g, h)

  double leaf_objective(double g_sum, double h_sum) const {
    const double denom = h_sum + lambda;
    return denom == 0.0 ? 0.0 : g_sum * g_sum / denom;
  }

  std::int32_t make_leaf(double g_sum, double h_sum) {
    TreeNode leaf;
    const double denom = h_sum + lambda;
    leaf.value = {denom == 0.0 ? 0.0 : -g_sum / denom, 0.0};
    tree.nodes.push_back(leaf);
    return static_cast<std::int32_t>(tree.nodes.size() - 1);
  }

  std::int32_t build(const std::vector<std::size_t>& sample, int depth) {
    const std::size_t n = sample.size();
    double g_sum = 0.0, h_sum = 0.0;
    for (std::size_t idx : sample) {
      g_sum += grad[idx];
      h_sum += hess[idx];
    }

    if (depth >= max_depth || n < 2) {
      return make_leaf(g_sum, h_sum);
    }

    const double parent_objective = leaf_objective(g_sum, h_sum);
    double best_gain = 0.0;
    std::int32_t best_feature = -1;
    double best_threshold = 0.0;

    for (std::size_t f = 0; f < data.d; ++f) {
      scratch.clear();
      for (std::size_t idx : sample) {
        scratch.emplace_back(data.at(idx, f), grad[idx], hess[idx]);
      }
      std::sort(scratch.begin(), scratch.end(),
                [](const auto& a, const auto& b) {
                  return std::get<0>(a) < std::get<0>(b);
                });

      double gl = std::get<1>(scratch[0]);
      double hl = std::get<2>(scratch[0]);
      for (std::size_t i = 1; i < n; ++i) {
        if (std::get<0>(scratch[i - 1]) < std::get<0>(scratch[i])) {
          const double gain = 0.5 * (leaf_objective(gl, hl) +
                                     leaf_objective(g_sum - gl, h_sum - hl) -
                                     parent_objective);
          if (gain > best_gain) {
            best_gain = gain;
            best_feature = static_cast<std::int32_t>(f);
            best_threshold =
                (static_cast<double>(std::get<0>(scratch[i - 1])) +
                 static_cast<double>(std::get<0>(scratch[i]))) /
                2.0;
          }
        }
        gl += std::get<1>(scratch[i]);
        hl += std::get<2>(scratch[i]);
      }
    }

    if (best_feature < 0 || best_gain <= 0.0) {
      return make_leaf(g_sum, h_sum);
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

GradBoostModel GradBoostModel::train(const TrainMatrix& data,
                                     const GradBoostConfig& config) {
  config.validate();
  const std::size_t n_jail = data.count(Label::Jailbreak);
  if (n_jail == 0 || n_jail == data.n) {
    throw std::invalid_argument(
        "gradient boosting needs both classes in the training data");
  }

  GradBoostModel model;
  model.config_ = config;
  model.dimension_ = data.d;
  model.base_score_ = std::log(static_cast<double>(n_jail) /
                               static_cast<double>(data.n - n_jail));

  std::vector<double> raw(data.n, model.base_score_);
  std::vector<double> grad(data.n), hess(data.n);

  auto mean_loss = [&] {
    double sum = 0.0;
    for (std::size_t i = 0; i < data.n; ++i) {
      sum += logistic_loss(raw[i], data.y[i]);
    }
    return sum / static_cast<double>(data.n);
  };
  model.training_loss_.reserve(static_cast<std::size_t>(config.n_estimators) + 1);
  model.training_loss_.push_back(mean_loss());

  std::vector<std::size_t> all(data.n);
  for (std::size_t i = 0; i < data.n; ++i) all[i] = i;

  for (int round = 0; round < config.n_estimators; ++round) {
    for (std::size_t i = 0; i < data.n; ++i) {
      const double p = sigmoid(raw[i]);
      grad[i] = p - static_cast<double>(data.y[i]);
      hess[i] = p * (1.0 - p);
    }

    NewtonTreeBuilder builder{data, grad, hess, config.l2_leaf_regularization,
                              config.max_depth};
    builder.build(all, 0);
    builder.tree.depth = builder.tree.max_node_depth();

    for (std::size_t i = 0; i < data.n; ++i) {
      raw[i] += config.learning_rate * builder.tree.route(data.row(i)).value[0];
    }
    model.trees_.push_back(std::move(builder.tree));
    model.training_loss_.push_back(mean_loss());
  }
  return model;
}

GradBoostModel GradBoostModel::train(std::span<const LabeledEmbedding> data,
                                     const GradBoostConfig& config) {
  return train(TrainMatrix::from(data), config);
}

double GradBoostModel::raw_score(std::span<const float> x) const {
  check_dimension(x, dimension_);
  double raw = base_score_;
  for (const DecisionTree& tree : trees_) {
    raw += config_.learning_rate * tree.route(x).value[0];
  }
  return raw;
}

Detection GradBoostModel::predict(std::span<const float> x) const {
  const double score = sigmoid(raw_score(x));
  return {score, score > 0.5 ? Label::Jailbreak : Label::Benign};
}

nlohmann::json GradBoostModel::payload_json() const {
  nlohmann::json trees = nlohmann::json::array();
  for (const DecisionTree& t : trees_) trees.push_back(t.to_json());
  return {{"base_score", base_score_}, {"trees", std::move(trees)}};
}

GradBoostModel GradBoostModel::from_payload(const nlohmann::json& payload,
                                            const GradBoostConfig& config,
                                            std::size_t dimension) {
  GradBoostModel model;
  model.config_ = config;
  model.dimension_ = dimension;
  model.base_score_ = payload.at("base_score").get<double>();
  for (const auto& t : payload.at("trees")) {
    model.trees_.push_back(DecisionTree::from_json(t));
  }
  return model;
}

}  // namespace jbshield
