#include "jbshield/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

namespace jbshield {

ConfusionCounts confusion(std::span<const Label> predictions,
                          std::span<const Label> labels) {
  if (predictions.size() != labels.size()) {
    throw std::invalid_argument(
        "confusion: " + std::to_string(predictions.size()) +
        " predictions vs " + std::to_string(labels.size()) + " labels");
  }
  if (predictions.empty()) {
    throw std::invalid_argument("confusion: empty input");
  }
  ConfusionCounts c;
  for (std::size_t i = 0; i < predictions.size(); ++i) {
    const bool pred = predictions[i] == Label::Jailbreak;
    const bool truth = labels[i] == Label::Jailbreak;
    if (pred && truth) {
      ++c.tp;
    } else if (pred && !truth) {
      ++c.fp;
    } else if (!pred && truth) {
      ++c.fn;
    } else {
      ++c.tn;
    }
  }
  return c;
}

std::optional<double> f1(const ConfusionCounts& c) {
  const std::uint64_t denom = 2 * c.tp + c.fp + c.fn;
  if (denom == 0) return std::nullopt;
  return 2.0 * static_cast<double>(c.tp) / static_cast<double>(denom);
}

std::optional<double> fpr(const ConfusionCounts& c) {
  const std::uint64_t denom = c.fp + c.tn;
  if (denom == 0) return std::nullopt;
  return static_cast<double>(c.fp) / static_cast<double>(denom);
}

std::optional<double> fnr(const ConfusionCounts& c) {
  const std::uint64_t denom = c.fn + c.tp;
  if (denom == 0) return std::nullopt;
  return static_cast<double>(c.fn) / static_cast<double>(denom);
}

double average_precision(std::span<const double> scores,
                         std::span<const Label> labels) {
  if (scores.size() != labels.size()) {
    throw std::invalid_argument("average_precision: size mismatch");
  }
  if (scores.empty()) {
    throw std::invalid_argument("average_precision: empty input");
  }
  std::size_t positives = 0;
  for (std::size_t i = 0; i < scores.size(); ++i) {
    if (!std::isfinite(scores[i])) {
      throw std::invalid_argument("average_precision: non-finite score");
    }
    if (labels[i] == Label::Jailbreak) ++positives;
  }
  if (positives == 0) {
    throw std::invalid_argument("average_precision: no positive labels");
  }

  std::vector<std::size_t> order(scores.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return scores[a] > scores[b];
  });

  // walk distinct-score groups; precision/recall advance per whole group
  double ap = 0.0;
  double prev_recall = 0.0;
  std::size_t tp = 0, fp = 0;
  std::size_t i = 0;
  while (i < order.size()) {
    std::size_t j = i;
    while (j < order.size() && scores[order[j]] == scores[order[i]]) {
      if (labels[order[j]] == Label::Jailbreak) {
        ++tp;
      } else {
        ++fp;
      }
      ++j;
    }
    const double recall = static_cast<double>(tp) / static_cast<double>(positives);
    const double precision =
        static_cast<double>(tp) / static_cast<double>(tp + fp);
    ap += (recall - prev_recall) * precision;
    prev_recall = recall;
    i = j;
  }
  return ap;
}

EvaluationReport EvaluationReport::from(std::span<const double> scores,
                                        std::span<const Label> predictions,
                                        std::span<const Label> labels) {
  EvaluationReport report;
  report.counts = confusion(predictions, labels);
  report.f1 = jbshield::f1(report.counts);
  report.fpr = jbshield::fpr(report.counts);
  report.fnr = jbshield::fnr(report.counts);
  if (!scores.empty() &&
      std::any_of(labels.begin(), labels.end(),
                  [](Label l) { return l == Label::Jailbreak; })) {
    report.auprc = average_precision(scores, labels);
  }
  return report;
}

namespace {
nlohmann::json opt_json(const std::optional<double>& v) {
  return v ? nlohmann::json(*v) : nlohmann::json();
}
}  // namespace

nlohmann::json report_to_json(const EvaluationReport& report,
                              const std::string& detector,
                              const std::string& embedder,
                              const std::string& dataset_name,
                              const std::string& dataset_hash,
                              std::size_t dataset_size) {
  return {{"format", "jbshield-eval"},
          {"version", 1},
          {"detector", detector},
          {"embedder", embedder},
          {"dataset",
           {{"name", dataset_name},
            {"hash", dataset_hash},
            {"size", dataset_size}}},
          {"counts",
           {{"tp", report.counts.tp},
            {"fp", report.counts.fp},
            {"tn", report.counts.tn},
            {"fn", report.counts.fn}}},
          {"f1", opt_json(report.f1)},
          {"fpr", opt_json(report.fpr)},
          {"fnr", opt_json(report.fnr)},
          {"auprc", opt_json(report.auprc)}};
}

}  // namespace jbshield
