#pragma once

#include "jbshield/model_common.hpp"
#include "jbshield/tree.hpp"

namespace jbshield {

struct GradBoostConfig {
  int max_depth = 2;
  int n_estimators = 2048;
  double learning_rate = 0.3;
  double l2_leaf_regularization = 1.0;
  std::uint64_t seed = 0;  // reserved; boosting itself is deterministic

  /// The configuration the engine was tuned to: depth 2, 2048 estimators.
  static GradBoostConfig defaults() { return {}; }

  void validate() const;
  nlohmann::json to_json() const;
  static GradBoostConfig from_json(const nlohmann::json& doc);
};

/// Newton-boosted trees on log-odds. The model starts at the empirical
/// log-odds of the jailbreak class; each round fits a tree to the logistic
/// gradient/hessian pair (g = p - y, h = p(1-p)), choosing splits by the
/// second-order gain
///   1/2 [ G_L^2/(H_L+lambda) + G_R^2/(H_R+lambda) - G^2/(H+lambda) ]
/// and setting leaf weights to -G/(H+lambda), scaled by the learning rate.
class GradBoostModel {
 public:
  static GradBoostModel train(const TrainMatrix& data,
                              const GradBoostConfig& config);
  static GradBoostModel train(std::span<const LabeledEmbedding> data,
                              const GradBoostConfig& config);

  /// score = sigmoid(F(x)); Jailbreak iff score > 0.5.
  Detection predict(std::span<const float> x) const;

  /// Raw additive log-odds F(x).
  double raw_score(std::span<const float> x) const;

  double base_score() const { return base_score_; }
  const std::vector<DecisionTree>& trees() const { return trees_; }
  const GradBoostConfig& config() const { return config_; }
  std::size_t dimension() const { return dimension_; }

  /// Mean logistic loss on the training set, recorded after initialization
  /// and after every boosting round.
  const std::vector<double>& training_loss() const { return training_loss_; }

  nlohmann::json payload_json() const;
  static GradBoostModel from_payload(const nlohmann::json& payload,
                                     const GradBoostConfig& config,
                                     std::size_t dimension);

 private:
  GradBoostModel() = default;

  std::vector<DecisionTree> trees_;
  GradBoostConfig config_;
  std::size_t dimension_ = 0;
  double base_score_ = 0.0;
  std::vector<double> training_loss_;
};

}  // namespace jbshield
