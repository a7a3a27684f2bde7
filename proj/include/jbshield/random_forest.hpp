#pragma once

#include <optional>

#include "jbshield/model_common.hpp"
#include "jbshield/prng.hpp"
#include "jbshield/tree.hpp"

namespace jbshield {

struct RandomForestConfig {
  std::optional<int> max_depth = 20;  // nullopt = unbounded
  int n_estimators = 100;
  std::optional<int> features_per_split;  // nullopt = ceil(sqrt(d))
  std::uint64_t seed = 0;

  /// The configuration the engine was tuned to: depth 20, 100 estimators.
  static RandomForestConfig defaults() { return {}; }

  void validate(std::size_t dimension) const;
  nlohmann::json to_json() const;
  static RandomForestConfig from_json(const nlohmann::json& doc);
};

/// Grow one Gini tree on the given sample multiset. At each node,
/// features_per_split features are drawn without replacement from rng and
/// the split maximizing the weighted Gini impurity decrease over all
/// midpoint thresholds is taken; pure nodes, nodes below two samples, nodes
/// at the depth limit, or nodes with no positive-gain split become leaves
/// holding the class distribution. Exposed so tests can drive it with a
/// known sample set.
DecisionTree grow_gini_tree(const TrainMatrix& data,
                            std::span<const std::size_t> sample,
                            std::optional<int> max_depth,
                            int features_per_split, SplitMix64& rng);

/// Bagged ensemble of Gini trees. Each tree draws its bootstrap sample and
/// split features from an independent stream derived from (seed, tree
/// index), so any training order produces the identical model.
class RandomForestModel {
 public:
  static RandomForestModel train(const TrainMatrix& data,
                                 const RandomForestConfig& config);
  static RandomForestModel train(std::span<const LabeledEmbedding> data,
                                 const RandomForestConfig& config);

  /// Mean of per-tree jailbreak probabilities; Jailbreak iff score > 0.5.
  Detection predict(std::span<const float> x) const;

  /// One tree's jailbreak probability for x.
  double tree_score(std::size_t tree, std::span<const float> x) const;

  const std::vector<DecisionTree>& trees() const { return trees_; }
  const RandomForestConfig& config() const { return config_; }
  std::size_t dimension() const { return dimension_; }

  nlohmann::json payload_json() const;
  static RandomForestModel from_payload(const nlohmann::json& payload,
                                        const RandomForestConfig& config,
                                        std::size_t dimension);

 private:
  RandomForestModel() = default;

  std::vector<DecisionTree> trees_;
  RandomForestConfig config_;
  std::size_t dimension_ = 0;
};

}  // namespace jbshield
