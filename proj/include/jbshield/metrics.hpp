#pragma once

#include <optional>
#include <span>

#include <nlohmann/json.hpp>

#include "jbshield/dataset.hpp"

namespace jbshield {

/// Four-way tally with Jailbreak as the positive class.
struct ConfusionCounts {
  std::uint64_t tp = 0;
  std::uint64_t fp = 0;
  std::uint64_t tn = 0;
  std::uint64_t fn = 0;

  std::uint64_t total() const { return tp + fp + tn + fn; }
  bool operator==(const ConfusionCounts&) const = default;
};

ConfusionCounts confusion(std::span<const Label> predictions,
                          std::span<const Label> labels);

/// 2tp / (2tp + fp + fn); nullopt when tp+fp+fn = 0. Undefined statistics
/// are surfaced, never reported as 0.
std::optional<double> f1(const ConfusionCounts& counts);
/// fp / (fp + tn); nullopt when there are no negatives.
std::optional<double> fpr(const ConfusionCounts& counts);
/// fn / (fn + tp); nullopt when there are no positives.
std::optional<double> fnr(const ConfusionCounts& counts);

/// Average precision with step interpolation. Items are ranked by score
/// descending and tied scores enter as one group, so the result does not
/// depend on the incidental input order. Needs at least one positive label.
double average_precision(std::span<const double> scores,
                         std::span<const Label> labels);

struct EvaluationReport {
  ConfusionCounts counts;
  std::optional<double> f1;
  std::optional<double> fpr;
  std::optional<double> fnr;
  std::optional<double> auprc;

  static EvaluationReport from(std::span<const double> scores,
                               std::span<const Label> predictions,
                               std::span<const Label> labels);
};

/// Report JSON with detector and dataset identity alongside the statistics.
nlohmann::json report_to_json(const EvaluationReport& report,
                              const std::string& detector,
                              const std::string& embedder,
                              const std::string& dataset_name,
                              const std::string& dataset_hash,
                              std::size_t dataset_size);

}  // namespace jbshield
