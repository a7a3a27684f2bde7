#pragma once

#include <filesystem>
#include <span>
#include <string_view>
#include <vector>

#include "jbshield/model_common.hpp"

namespace jbshield {

enum class Metric { Cosine, L2 };

const char* to_string(Metric metric);
Metric metric_from_string(std::string_view name);

struct VectorDbConfig {
  int k = 1;
  Metric metric = Metric::Cosine;
};

/// dot(a,b) / (|a||b|), accumulated in 64-bit and clamped to [-1,1].
/// Zero-norm inputs are an error.
double cosine_similarity(std::span<const float> a, std::span<const float> b);

/// Euclidean distance, accumulated in 64-bit.
double l2_distance(std::span<const float> a, std::span<const float> b);

struct Neighbor {
  const LabeledEmbedding* entry = nullptr;
  double score = 0.0;  // cosine: similarity; l2: distance
};

/// Brute-force nearest-neighbor store over labeled embeddings. Immutable
/// after construction; queries are safe from any number of threads.
class VectorIndex {
 public:
  VectorIndex(std::vector<LabeledEmbedding> entries, Metric metric);

  std::size_t size() const { return entries_.size(); }
  std::size_t dimension() const { return dimension_; }
  Metric metric() const { return metric_; }
  const std::vector<LabeledEmbedding>& entries() const { return entries_; }
  LabelCounts label_counts() const;

  /// Top k entries: greatest cosine similarity descending, or least L2
  /// distance ascending. Equal scores break toward the lowest record id.
  /// k must not exceed the entry count.
  std::vector<Neighbor> query_topk(std::span<const float> query, int k) const;

  /// Signed top-k mean: jailbreak neighbors contribute +affinity, benign
  /// neighbors -affinity, where affinity is the cosine similarity or
  /// 1/(1+distance) for L2. Decision is Jailbreak iff the mean is > 0.
  Detection score(const VectorDbConfig& config,
                  std::span<const float> query) const;

  /// Entries in the embedding-cache JSONL format (with id and label fields
  /// added per line) plus a sidecar manifest.
  void save(const std::filesystem::path& entries_path,
            const std::filesystem::path& manifest_path) const;
  static VectorIndex load(const std::filesystem::path& entries_path,
                          const std::filesystem::path& manifest_path);

 private:
  std::vector<LabeledEmbedding> entries_;
  std::vector<double> norms_;
  std::size_t dimension_ = 0;
  Metric metric_ = Metric::Cosine;
};

}  // namespace jbshield
