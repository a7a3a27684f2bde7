#pragma once

#include <array>

#include "jbshield/model_common.hpp"
#include "jbshield/prng.hpp"

namespace jbshield {

struct NetConfig {
  int n_hidden_layers = 6;   // legal range [2,8]
  int hidden_units = 32;     // legal range [2,128]
  int max_epochs = 30;
  int batch_size = 64;
  double learning_rate = 1e-3;
  int patience = 3;
  std::uint64_t seed = 0;

  /// The architecture the engine was tuned to: 6 hidden layers of 32 units.
  static NetConfig defaults() { return {}; }

  void validate() const;
  nlohmann::json to_json() const;
  static NetConfig from_json(const nlohmann::json& doc);
};

/// Dense parameters: hidden layers with ReLU, then a 2-logit output layer
/// (index 0 = benign, 1 = jailbreak). Weights are row-major [out][in].
struct NetParameters {
  std::size_t input_dim = 0;
  std::vector<std::size_t> layer_out;          // output width per layer
  std::vector<std::vector<double>> weights;    // [layer][out*in]
  std::vector<std::vector<double>> biases;     // [layer][out]

  static NetParameters zeros(std::size_t input_dim, int hidden_layers,
                             int hidden_units);
  /// He-uniform fan-in initialization, biases zero.
  static NetParameters he_init(std::size_t input_dim, int hidden_layers,
                               int hidden_units, SplitMix64& rng);

  std::size_t parameter_count() const;
  bool all_finite() const;
};

/// Raw output logits for one input.
std::array<double, 2> net_forward(const NetParameters& params,
                                  std::span<const float> x);

std::array<double, 2> softmax2(const std::array<double, 2>& logits);

struct NetGradients {
  std::vector<std::vector<double>> weights;
  std::vector<std::vector<double>> biases;

  static NetGradients zeros_like(const NetParameters& params);
};

/// Mean softmax cross-entropy over the batch.
double net_batch_loss(const NetParameters& params, const TrainMatrix& data,
                      std::span<const std::size_t> batch);

/// Backprop: fills grads with the gradient of the mean batch loss and
/// returns the loss itself.
double net_loss_and_gradients(const NetParameters& params,
                              const TrainMatrix& data,
                              std::span<const std::size_t> batch,
                              NetGradients& grads);

struct TrainingHistory {
  std::vector<double> holdout_loss;  // one entry per trained epoch
  int best_epoch = 0;                // 1-based
  int stopped_epoch = 0;             // 1-based; equals epochs trained
};

/// Mini-batch Adam on softmax cross-entropy with an internal stratified 10%
/// holdout driving early stopping: training stops once the holdout loss has
/// failed to improve for `patience` consecutive epochs, and the parameters
/// from the best holdout epoch are returned.
class NeuralNetModel {
 public:
  static NeuralNetModel train(const TrainMatrix& data, const NetConfig& config);
  static NeuralNetModel train(std::span<const LabeledEmbedding> data,
                              const NetConfig& config);

  /// score = softmax jailbreak probability; decision by argmax over the two
  /// logits with ties going to Benign.
  Detection classify(std::span<const float> x) const;

  const NetParameters& parameters() const { return params_; }
  const NetConfig& config() const { return config_; }
  const TrainingHistory& history() const { return history_; }
  std::size_t dimension() const { return params_.input_dim; }

  nlohmann::json payload_json() const;
  static NeuralNetModel from_payload(const nlohmann::json& payload,
                                     const NetConfig& config);

 private:
  NeuralNetModel() = default;

  NetParameters params_;
  NetConfig config_;
  TrainingHistory history_;
};

}  // namespace jbshield
