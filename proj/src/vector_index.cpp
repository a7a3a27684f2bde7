#include "jbshield/vector_index.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>

#include <nlohmann/json.hpp>

namespace jbshield {

using nlohmann::json;

const char* to_string(Metric metric) {
  return metric == Metric::Cosine ? "cosine" : "l2";
}

Metric metric_from_string(std::string_view name) {
  if (name == "cosine") return Metric::Cosine;
  if (name == "l2") return Metric::L2;
  throw std::invalid_argument("unknown metric \"" + std::string(name) + "\"");
}

double cosine_similarity(std::span<const float> a, std::span<const float> b) {
  if (a.size() != b.size()) {
    throw std::invalid_argument("cosine_similarity: dimension mismatch (" +
                                std::to_string(a.size()) + " vs " +
                                std::to_string(b.size()) + ")");
  }
  double dot = 0.0, na = 0.0, nb = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double x = a[i];
    const double y = b[i];
    dot += x * y;
    na += x * x;
    nb += y * y;
  }
  if (na == 0.0 || nb == 0.0) {
    throw std::invalid_argument("cosine_similarity: zero-norm input");
  }
  return std::clamp(dot / std::sqrt(na * nb), -1.0, 1.0);
}

double l2_distance(std::span<const float> a, std::span<const float> b) {
  if (a.size() != b.size()) {
    throw std::invalid_argument("l2_distance: dimension mismatch (" +
                                std::to_string(a.size()) + " vs " +
                                std::to_string(b.size()) + ")");
  }
  double sq = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double diff = static_cast<double>(a[i]) - static_cast<double>(b[i]);
    sq += diff * diff;
  }
  return std::sqrt(sq);
}

namespace {

double squared_norm(std::span<const float> v) {
  double sq = 0.0;
  for (float x : v) sq += static_cast<double>(x) * static_cast<double>(x);
  return sq;
}

}  // namespace

VectorIndex::VectorIndex(std::vector<LabeledEmbedding> entries, Metric metric)
    : entries_(std::move(entries)), metric_(metric) {
  if (entries_.empty()) {
    throw std::invalid_argument("vector index needs at least one entry");
  }
  dimension_ = entries_.front().vector.values.size();
  norms_.reserve(entries_.size());
  for (const auto& e : entries_) {
    if (e.vector.values.size() != dimension_) {
      throw std::invalid_argument("index entry " + e.record_id +
                                  " has dimension " +
                                  std::to_string(e.vector.values.size()) +
                                  ", index dimension is " +
                                  std::to_string(dimension_));
    }
    for (float x : e.vector.values) {
      if (!std::isfinite(x)) {
        throw std::invalid_argument("index entry " + e.record_id +
                                    " has a non-finite component");
      }
    }
    const double norm = std::sqrt(squared_norm(e.vector.values));
    if (metric_ == Metric::Cosine && norm == 0.0) {
      throw std::invalid_argument("index entry " + e.record_id +
                                  " has zero norm; cosine undefined");
    }
    norms_.push_back(norm);
  }
}

LabelCounts VectorIndex::label_counts() const {
  LabelCounts c;
  for (const auto& e : entries_) {
    if (e.label == Label::Jailbreak) {
      ++c.jailbreak;
    } else {
      ++c.benign;
    }
  }
  return c;
}

std::vector<Neighbor> VectorIndex::query_topk(std::span<const float> query,
                                              int k) const {
  check_dimension(query, dimension_);
  if (k < 1) throw std::invalid_argument("k must be positive");
  if (static_cast<std::size_t>(k) > entries_.size()) {
    throw std::invalid_argument("k=" + std::to_string(k) + " exceeds index size " +
                                std::to_string(entries_.size()));
  }

  const double qnorm = std::sqrt(squared_norm(query));
  if (metric_ == Metric::Cosine && qnorm == 0.0) {
    throw std::invalid_argument("query has zero norm; cosine undefined");
  }

  std::vector<std::pair<double, std::size_t>> scored(entries_.size());
  for (std::size_t i = 0; i < entries_.size(); ++i) {
    const auto& values = entries_[i].vector.values;
    double s;
    if (metric_ == Metric::Cosine) {
      double dot = 0.0;
      for (std::size_t j = 0; j < dimension_; ++j) {
        dot += static_cast<double>(values[j]) * static_cast<double>(query[j]);
      }
      s = std::clamp(dot / (norms_[i] * qnorm), -1.0, 1.0);
    } else {
      s = l2_distance(values, query);
    }
    scored[i] = {s, i};
  }

  const bool descending = metric_ == Metric::Cosine;
  auto better = [&](const std::pair<double, std::size_t>& a,
                    const std::pair<double, std::size_t>& b) {
    if (a.first != b.first) {
      return descending ? a.first > b.first : a.first < b.first;
    }
    return entries_[a.second].record_id < entries_[b.second].record_id;
  };
  std::partial_sort(scored.begin(), scored.begin() + k, scored.end(), better);

  std::vector<Neighbor> out;
  out.reserve(static_cast<std::size_t>(k));
  for (int i = 0; i < k; ++i) {
    out.push_back({&entries_[scored[static_cast<std::size_t>(i)].second],
                   scored[static_cast<std::size_t>(i)].first});
  }
  return out;
}

Detection VectorIndex::score(const VectorDbConfig& config,
                             std::span<const float> query) const {
  const auto neighbors = query_topk(query, config.k);
  double sum = 0.0;
  for (const Neighbor& nb : neighbors) {
    const double affinity =
        metric_ == Metric::Cosine ? nb.score : 1.0 / (1.0 + nb.score);
    sum += nb.entry->label == Label::Jailbreak ? affinity : -affinity;
  }
  const double mean = sum / static_cast<double>(neighbors.size());
  return {mean, mean > 0.0 ? Label::Jailbreak : Label::Benign};
}

void VectorIndex::save(const std::filesystem::path& entries_path,
                       const std::filesystem::path& manifest_path) const {
  std::ofstream out(entries_path);
  if (!out) throw std::runtime_error("cannot write " + entries_path.string());
  out << json({{"format", "jbshield-embcache"}, {"version", 1}}).dump() << "\n";
  for (const auto& e : entries_) {
    const json row = {{"key", e.text_key},
                      {"embedder", e.vector.embedder},
                      {"dim", e.vector.values.size()},
                      {"values", e.vector.values},
                      {"id", e.record_id},
                      {"label", to_string(e.label)}};
    out << row.dump() << "\n";
  }
  if (!out) throw std::runtime_error("failed writing " + entries_path.string());

  const LabelCounts counts = label_counts();
  const json manifest = {{"format", "jbshield-index"},
                         {"version", 1},
                         {"dimension", dimension_},
                         {"metric", to_string(metric_)},
                         {"entries", entries_.size()},
                         {"label_counts",
                          {{"jailbreak", counts.jailbreak},
                           {"benign", counts.benign}}}};
  std::ofstream mout(manifest_path);
  if (!mout) throw std::runtime_error("cannot write " + manifest_path.string());
  mout << manifest.dump(2) << "\n";
  if (!mout) {
    throw std::runtime_error("failed writing " + manifest_path.string());
  }
}

VectorIndex VectorIndex::load(const std::filesystem::path& entries_path,
                              const std::filesystem::path& manifest_path) {
  std::ifstream min(manifest_path);
  if (!min) throw std::runtime_error("cannot open " + manifest_path.string());
  json manifest;
  min >> manifest;
  if (manifest.value("format", "") != "jbshield-index" ||
      manifest.value("version", 0) != 1) {
    throw std::runtime_error(manifest_path.string() +
                             ": not a jbshield-index v1 manifest");
  }
  const Metric metric =
      metric_from_string(manifest.at("metric").get<std::string>());
  const auto dimension = manifest.at("dimension").get<std::size_t>();

  std::ifstream in(entries_path);
  if (!in) throw std::runtime_error("cannot open " + entries_path.string());
  std::string line;
  std::vector<LabeledEmbedding> entries;
  bool saw_header = false;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const json row = json::parse(line);
    if (!saw_header) {
      if (row.value("format", "") != "jbshield-embcache" ||
          row.value("version", 0) != 1) {
        throw std::runtime_error(entries_path.string() +
                                 ": missing jbshield-embcache v1 header");
      }
      saw_header = true;
      continue;
    }
    LabeledEmbedding e;
    e.record_id = row.at("id").get<std::string>();
    e.text_key = row.at("key").get<std::string>();
    e.label = label_from_token(row.at("label").get<std::string>());
    e.vector.embedder = row.at("embedder").get<std::string>();
    e.vector.values = row.at("values").get<std::vector<float>>();
    entries.push_back(std::move(e));
  }
  if (entries.size() != manifest.at("entries").get<std::size_t>()) {
    throw std::runtime_error(entries_path.string() +
                             ": entry count disagrees with manifest");
  }
  VectorIndex index(std::move(entries), metric);
  if (index.dimension() != dimension) {
    throw std::runtime_error(entries_path.string() +
                             ": dimension disagrees with manifest");
  }
  return index;
}

}  // namespace jbshield
