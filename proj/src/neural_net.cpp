#include "jbshield/neural_net.hpp"

#include <algorithm>
#include <cmath>

namespace jbshield {

void NetConfig::validate() const {
  if (n_hidden_layers < 2 || n_hidden_layers > 8) {
    throw std::invalid_argument("n_hidden_layers must be in [2,8]");
  }
  if (hidden_units < 2 || hidden_units > 128) {
    throw std::invalid_argument("hidden_units must be in [2,128]");
  }
  if (max_epochs < 1) throw std::invalid_argument("max_epochs must be >= 1");
  if (batch_size < 1) throw std::invalid_argument("batch_size must be >= 1");
  if (!(learning_rate > 0.0)) {
    throw std::invalid_argument("learning_rate must be positive");
  }
  if (patience < 1) throw std::invalid_argument("patience must be >= 1");
  if (patience >= max_epochs) {
    throw std::invalid_argument("patience must be smaller than max_epochs");
  }
}

nlohmann::json NetConfig::to_json() const {
  return {{"n_hidden_layers", n_hidden_layers},
          {"hidden_units", hidden_units},
          {"max_epochs", max_epochs},
          {"batch_size", batch_size},
          {"learning_rate", learning_rate},
          {"patience", patience},
          {"seed", seed}};
}

NetConfig NetConfig::from_json(const nlohmann::json& doc) {
  NetConfig cfg;
  if (doc.contains("n_hidden_layers")) {
    cfg.n_hidden_layers = doc["n_hidden_layers"].get<int>();
  }
  if (doc.contains("hidden_units")) {
    cfg.hidden_units = doc["hidden_units"].get<int>();
  }
  if (doc.contains("max_epochs")) cfg.max_epochs = doc["max_epochs"].get<int>();
  if (doc.contains("batch_size")) cfg.batch_size = doc["batch_size"].get<int>();
  if (doc.contains("learning_rate")) {
    cfg.learning_rate = doc["learning_rate"].get<double>();
  }
  if (doc.contains("patience")) cfg.patience = doc["patience"].get<int>();
  if (doc.contains("seed")) cfg.seed = doc["seed"].get<std::uint64_t>();
  return cfg;
}

NetParameters NetParameters::zeros(std::size_t input_dim, int hidden_layers,
                                   int hidden_units) {
  NetParameters p;
  p.input_dim = input_dim;
  std::size_t in = input_dim;
  for (int l = 0; l < hidden_layers; ++l) {
    const auto out = static_cast<std::size_t>(hidden_units);
    p.layer_out.push_back(out);
    p.weights.emplace_back(out * in, 0.0);
    p.biases.emplace_back(out, 0.0);
    in = out;
  }
  p.layer_out.push_back(2);
  p.weights.emplace_back(2 * in, 0.0);
  p.biases.emplace_back(2, 0.0);
  return p;
}

NetParameters NetParameters::he_init(std::size_t input_dim, int hidden_layers,
                                     int hidden_units, SplitMix64& rng) {
  NetParameters p = zeros(input_dim, hidden_layers, hidden_units);
  std::size_t in = input_dim;
  for (std::size_t l = 0; l < p.weights.size(); ++l) {
    const double limit = std::sqrt(6.0 / static_cast<double>(in));
    for (double& w : p.weights[l]) {
      w = (rng.next_double() * 2.0 - 1.0) * limit;
    }
    in = p.layer_out[l];
  }
  return p;
}

std::size_t NetParameters::parameter_count() const {
  std::size_t count = 0;
  for (std::size_t l = 0; l < weights.size(); ++l) {
    count += weights[l].size() + biases[l].size();
  }
  return count;
}

bool NetParameters::all_finite() const {
  for (std::size_t l = 0; l < weights.size(); ++l) {
    for (double w : weights[l]) {
      if (!std::isfinite(w)) return false;
    }
    for (double b : biases[l]) {
      if (!std::isfinite(b)) return false;
    }
  }
  return true;
}

namespace {

// forward pass keeping post-activation values per layer for backprop
struct ForwardTrace {
  std::vector<std::vector<double>> activations;  // [layer+1][width]
};

std::array<double, 2> forward_impl(const NetParameters& p,
                                   std::span<const float> x,
                                   ForwardTrace* trace) {
  check_dimension(x, p.input_dim);
  std::vector<double> cur(x.begin(), x.end());
  if (trace) trace->activations.push_back(cur);

  const std::size_t layers = p.weights.size();
  for (std::size_t l = 0; l < layers; ++l) {
    const std::size_t out = p.layer_out[l];
    const std::size_t in = cur.size();
    std::vector<double> next(out);
    const double* w = p.weights[l].data();
    for (std::size_t i = 0; i < out; ++i) {
      double acc = p.biases[l][i];
      const double* row = w + i * in;
      for (std::size_t j = 0; j < in; ++j) acc += row[j] * cur[j];
      next[i] = acc;
    }
    if (l + 1 < layers) {
      for (double& v : next) v = v > 0.0 ? v : 0.0;  // ReLU
    }
    if (trace) trace->activations.push_back(next);
    cur = std::move(next);
  }
  for (double v : cur) {
    if (!std::isfinite(v)) {
      throw std::runtime_error("non-finite activation in forward pass");
    }
  }
  return {cur[0], cur[1]};
}

}  // namespace

std::array<double, 2> net_forward(const NetParameters& params,
                                  std::span<const float> x) {
  return forward_impl(params, x, nullptr);
}

std::array<double, 2> softmax2(const std::array<double, 2>& logits) {
  const double m = std::max(logits[0], logits[1]);
  const double e0 = std::exp(logits[0] - m);
  const double e1 = std::exp(logits[1] - m);
  const double z = e0 + e1;
  return {e0 / z, e1 / z};
}

NetGradients NetGradients::zeros_like(const NetParameters& params) {
  NetGradients g;
  g.weights.reserve(params.weights.size());
  g.biases.reserve(params.biases.size());
  for (std::size_t l = 0; l < params.weights.size(); ++l) {
    g.weights.emplace_back(params.weights[l].size(), 0.0);
    g.biases.emplace_back(params.biases[l].size(), 0.0);
  }
  return g;
}

double net_batch_loss(const NetParameters& params, const TrainMatrix& data,
                      std::span<const std::size_t> batch) {
  double sum = 0.0;
  for (std::size_t idx : batch) {
    const auto logits = net_forward(params, data.row(idx));
    const double m = std::max(logits[0], logits[1]);
    const double lse =
        m + std::log(std::exp(logits[0] - m) + std::exp(logits[1] - m));
    sum += lse - logits[data.y[idx]];
  }
  return sum / static_cast<double>(batch.size());
}

double net_loss_and_gradients(const NetParameters& params,
                              const TrainMatrix& data,
                              std::span<const std::size_t> batch,
                              NetGradients& grads) {
  const std::size_t layers = params.weights.size();
  for (std::size_t l = 0; l < layers; ++l) {
    std::fill(grads.weights[l].begin(), grads.weights[l].end(), 0.0);
    std::fill(grads.biases[l].begin(), grads.biases[l].end(), 0.0);
  }

  const double inv_batch = 1.0 / static_cast<double>(batch.size());
  double loss_sum = 0.0;

  for (std::size_t idx : batch) {
    ForwardTrace trace;
    const auto logits = forward_impl(params, data.row(idx), &trace);

    const double m = std::max(logits[0], logits[1]);
    const double lse =
        m + std::log(std::exp(logits[0] - m) + std::exp(logits[1] - m));
    loss_sum += lse - logits[data.y[idx]];

    const auto probs = softmax2(logits);
    std::vector<double> delta = {probs[0], probs[1]};
    delta[data.y[idx]] -= 1.0;

    // backprop through the affine stack; hidden activations gate with ReLU'
    for (std::size_t l = layers; l-- > 0;) {
      const auto& input = trace.activations[l];
      const std::size_t out = params.layer_out[l];
      const std::size_t in = input.size();
      for (std::size_t i = 0; i < out; ++i) {
        const double d = delta[i] * inv_batch;
        grads.biases[l][i] += d;
        double* wrow = grads.weights[l].data() + i * in;
        for (std::size_t j = 0; j < in; ++j) wrow[j] += d * input[j];
      }
      if (l == 0) break;
      std::vector<double> prev(in, 0.0);
      const double* w = params.weights[l].data();
      for (std::size_t i = 0; i < out; ++i) {
        const double d = delta[i];
        const double* row = w + i * in;
        for (std::size_t j = 0; j < in; ++j) prev[j] += d * row[j];
      }
      // ReLU derivative: activations[l] is the rectified output of layer l-1
      for (std::size_t j = 0; j < in; ++j) {
        if (input[j] <= 0.0) prev[j] = 0.0;
      }
      delta = std::move(prev);
    }
  }
  return loss_sum * inv_batch;
}

namespace {

constexpr std::uint64_t kHoldoutStreamBenign = 0x30;
constexpr std::uint64_t kHoldoutStreamJailbreak = 0x31;
constexpr std::uint64_t kShuffleStream = 0x32;

constexpr double kAdamBeta1 = 0.9;
constexpr double kAdamBeta2 = 0.999;
constexpr double kAdamEps = 1e-8;

struct AdamState {
  NetGradients m;
  NetGradients v;
  long long t = 0;
};

void adam_step(NetParameters& params, const NetGradients& grads,
               AdamState& state, double lr) {
  ++state.t;
  const double bc1 = 1.0 - std::pow(kAdamBeta1, static_cast<double>(state.t));
  const double bc2 = 1.0 - std::pow(kAdamBeta2, static_cast<double>(state.t));
  for (std::size_t l = 0; l < params.weights.size(); ++l) {
    auto update = [&](std::vector<double>& theta, const std::vector<double>& g,
                      std::vector<double>& m, std::vector<double>& v) {
      for (std::size_t i = 0; i < theta.size(); ++i) {
        m[i] = kAdamBeta1 * m[i] + (1.0 - kAdamBeta1) * g[i];
        v[i] = kAdamBeta2 * v[i] + (1.0 - kAdamBeta2) * g[i] * g[i];
        theta[i] -= lr * (m[i] / bc1) / (std::sqrt(v[i] / bc2) + kAdamEps);
      }
    };
    update(params.weights[l], grads.weights[l], state.m.weights[l],
           state.v.weights[l]);
    update(params.biases[l], grads.biases[l], state.m.biases[l],
           state.v.biases[l]);
  }
}

// Stratified 90/10 inner split for the early-stopping monitor; membership
// depends only on (seed, record ids), matching stratified_split.
void holdout_split(const TrainMatrix& data, std::uint64_t seed,
                   std::vector<std::size_t>& train_idx,
                   std::vector<std::size_t>& holdout_idx) {
  for (std::uint8_t cls : {std::uint8_t{0}, std::uint8_t{1}}) {
    std::vector<std::pair<std::string, std::size_t>> members;
    for (std::size_t i = 0; i < data.n; ++i) {
      if (data.y[i] == cls) members.emplace_back(data.ids[i], i);
    }
    std::sort(members.begin(), members.end());
    SplitMix64 rng(derive_seed(
        seed, cls == 1 ? kHoldoutStreamJailbreak : kHoldoutStreamBenign));
    rng.shuffle(members);
    const std::size_t n_train = static_cast<std::size_t>(
        std::floor(0.9 * static_cast<double>(members.size()) + 0.5));
    for (std::size_t i = 0; i < members.size(); ++i) {
      (i < n_train ? train_idx : holdout_idx).push_back(members[i].second);
    }
  }
  std::sort(train_idx.begin(), train_idx.end());
  std::sort(holdout_idx.begin(), holdout_idx.end());
}

}  // namespace

NeuralNetModel NeuralNetModel::train(const TrainMatrix& data,
                                     const NetConfig& config) {
  config.validate();
  const std::size_t n_jail = data.count(Label::Jailbreak);
  if (n_jail == 0 || n_jail == data.n) {
    throw std::invalid_argument(
        "network training needs both classes in the training data");
  }
  if (data.n < 2 * static_cast<std::size_t>(config.batch_size)) {
    throw std::invalid_argument(
        "need at least 2*batch_size examples, got " + std::to_string(data.n));
  }

  std::vector<std::size_t> train_idx, holdout_idx;
  holdout_split(data, config.seed, train_idx, holdout_idx);
  if (holdout_idx.empty() || train_idx.empty()) {
    throw std::invalid_argument("data too small for the internal holdout");
  }

  SplitMix64 init_rng(derive_seed(config.seed, 0));
  NetParameters params = NetParameters::he_init(
      data.d, config.n_hidden_layers, config.hidden_units, init_rng);
  NetGradients grads = NetGradients::zeros_like(params);
  AdamState adam{NetGradients::zeros_like(params),
                 NetGradients::zeros_like(params)};

  SplitMix64 shuffle_rng(derive_seed(config.seed, kShuffleStream));
  NetParameters best_params = params;
  double best_loss = std::numeric_limits<double>::infinity();
  int best_epoch = 0;
  int stall = 0;

  TrainingHistory history;
  int epoch = 0;
  for (epoch = 1; epoch <= config.max_epochs; ++epoch) {
    shuffle_rng.shuffle(train_idx);
    const auto batch_size = static_cast<std::size_t>(config.batch_size);
    for (std::size_t start = 0; start < train_idx.size(); start += batch_size) {
      const std::size_t len = std::min(batch_size, train_idx.size() - start);
      const std::span<const std::size_t> batch{train_idx.data() + start, len};
      const double loss = net_loss_and_gradients(params, data, batch, grads);
      if (!std::isfinite(loss)) {
        throw std::runtime_error("training diverged at epoch " +
                                 std::to_string(epoch) + ": loss is not finite");
      }
      adam_step(params, grads, adam, config.learning_rate);
    }
    if (!params.all_finite()) {
      throw std::runtime_error("training diverged at epoch " +
                               std::to_string(epoch) +
                               ": parameters are not finite");
    }

    const double holdout = net_batch_loss(params, data, holdout_idx);
    if (!std::isfinite(holdout)) {
      throw std::runtime_error("training diverged at epoch " +
                               std::to_string(epoch) +
                               ": holdout loss is not finite");
    }
    history.holdout_loss.push_back(holdout);

    if (holdout < best_loss) {
      best_loss = holdout;
      best_params = params;
      best_epoch = epoch;
      stall = 0;
    } else if (++stall >= config.patience) {
      break;
    }
  }

  history.best_epoch = best_epoch;
  history.stopped_epoch = static_cast<int>(history.holdout_loss.size());

  NeuralNetModel model;
  model.params_ = std::move(best_params);
  model.config_ = config;
  model.history_ = std::move(history);
  return model;
}

NeuralNetModel NeuralNetModel::train(std::span<const LabeledEmbedding> data,
                                     const NetConfig& config) {
  return train(TrainMatrix::from(data), config);
}

Detection NeuralNetModel::classify(std::span<const float> x) const {
  const auto logits = net_forward(params_, x);
  const auto probs = softmax2(logits);
  // argmax with the tie going to benign
  const Label decision =
      logits[1] > logits[0] ? Label::Jailbreak : Label::Benign;
  return {probs[1], decision};
}

nlohmann::json NeuralNetModel::payload_json() const {
  nlohmann::json layers = nlohmann::json::array();
  std::size_t in = params_.input_dim;
  for (std::size_t l = 0; l < params_.weights.size(); ++l) {
    const std::size_t out = params_.layer_out[l];
    nlohmann::json rows = nlohmann::json::array();
    for (std::size_t i = 0; i < out; ++i) {
      nlohmann::json row = nlohmann::json::array();
      for (std::size_t j = 0; j < in; ++j) {
        row.push_back(params_.weights[l][i * in + j]);
      }
      rows.push_back(std::move(row));
    }
    layers.push_back({{"w", std::move(rows)}, {"b", params_.biases[l]}});
    in = out;
  }
  return {{"input_dim", params_.input_dim}, {"layers", std::move(layers)}};
}

NeuralNetModel NeuralNetModel::from_payload(const nlohmann::json& payload,
                                            const NetConfig& config) {
  NeuralNetModel model;
  model.config_ = config;
  NetParameters& p = model.params_;
  p.input_dim = payload.at("input_dim").get<std::size_t>();
  std::size_t in = p.input_dim;
  for (const auto& layer : payload.at("layers")) {
    const auto& rows = layer.at("w");
    const std::size_t out = rows.size();
    std::vector<double> w;
    w.reserve(out * in);
    for (const auto& row : rows) {
      if (row.size() != in) {
        throw std::runtime_error("network layer shape mismatch in payload");
      }
      for (const auto& v : row) w.push_back(v.get<double>());
    }
    auto b = layer.at("b").get<std::vector<double>>();
    if (b.size() != out) {
      throw std::runtime_error("network bias shape mismatch in payload");
    }
    p.layer_out.push_back(out);
    p.weights.push_back(std::move(w));
    p.biases.push_back(std::move(b));
    in = out;
  }
  if (p.layer_out.empty() || p.layer_out.back() != 2) {
    throw std::runtime_error("network output layer must have width 2");
  }
  return model;
}

}  // namespace jbshield
