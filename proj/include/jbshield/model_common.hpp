#pragma once

#include <cmath>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "jbshield/embedding.hpp"

namespace jbshield {

/// What every detector returns: a continuous score and the binary call.
struct Detection {
  double score = 0.0;
  Label decision = Label::Benign;
};

inline double sigmoid(double x) {
  if (x >= 0.0) {
    return 1.0 / (1.0 + std::exp(-x));
  }
  const double e = std::exp(x);
  return e / (1.0 + e);
}

/// Dense row-major view of labeled embeddings used by the trainers.
struct TrainMatrix {
  std::size_t n = 0;
  std::size_t d = 0;
  std::vector<float> x;         // n * d
  std::vector<std::uint8_t> y;  // 1 = jailbreak
  std::vector<std::string> ids;

  static TrainMatrix from(std::span<const LabeledEmbedding> data);

  float at(std::size_t row, std::size_t col) const { return x[row * d + col]; }
  std::span<const float> row(std::size_t i) const {
    return {x.data() + i * d, d};
  }
  std::size_t count(Label label) const;
};

inline TrainMatrix TrainMatrix::from(std::span<const LabeledEmbedding> data) {
  TrainMatrix m;
  m.n = data.size();
  m.d = data.empty() ? 0 : data.front().vector.values.size();
  m.x.reserve(m.n * m.d);
  m.y.reserve(m.n);
  m.ids.reserve(m.n);
  for (const auto& e : data) {
    if (e.vector.values.size() != m.d) {
      throw std::invalid_argument("embedding dimension mismatch in training "
                                  "data: expected " +
                                  std::to_string(m.d) + ", record " +
                                  e.record_id + " has " +
                                  std::to_string(e.vector.values.size()));
    }
    m.x.insert(m.x.end(), e.vector.values.begin(), e.vector.values.end());
    m.y.push_back(e.label == Label::Jailbreak ? 1 : 0);
    m.ids.push_back(e.record_id);
  }
  return m;
}

inline std::size_t TrainMatrix::count(Label label) const {
  const std::uint8_t want = label == Label::Jailbreak ? 1 : 0;
  std::size_t c = 0;
  for (std::uint8_t v : y) {
    if (v == want) ++c;
  }
  return c;
}

inline void check_dimension(std::span<const float> v, std::size_t expected) {
  if (v.size() != expected) {
    throw std::invalid_argument("vector dimension mismatch: expected " +
                                std::to_string(expected) + ", got " +
                                std::to_string(v.size()));
  }
}

}  // namespace jbshield
