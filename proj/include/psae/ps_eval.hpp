#pragma once

#include <cstddef>
#include <optional>
#include <string>
#include <vector>

#include "psae/eval_set.hpp"
#include "psae/sae.hpp"
#include "psae/shard.hpp"

namespace psae {

/// Confusion cells for polysemy detection. Reals so that expected counts of
/// the analytic baseline are representable.
///
///                    same meaning (1)   different meaning (0)
///   same max feature       tp                  fp
///   different              fn                  tn
struct ConfusionCounts {
  double tp = 0.0;
  double fp = 0.0;
  double fn = 0.0;
  double tn = 0.0;
  std::size_t abstained = 0;

  double total_classified() const noexcept { return tp + fp + fn + tn; }
  ConfusionCounts& operator+=(const ConfusionCounts& other);
  bool operator==(const ConfusionCounts&) const = default;
};

/// Training-side numbers copied into a report.
struct TrainingStats {
  double mse = 0.0;
  double l0 = 0.0;
  double l0_normalized = 0.0;
  std::size_t dead_count = 0;
};

/// std::nullopt marks a 0/0 metric.
using Metric = std::optional<double>;

struct MetricsReport {
  ConfusionCounts counts;
  Metric accuracy;
  Metric recall;
  Metric precision;
  Metric specificity;
  Metric sensitivity;  // tn / (tn + fn)
  Metric s_f1;         // harmonic mean of recall and precision
  Metric d_f1;         // harmonic mean of specificity and sensitivity
  Metric average_f1;
  std::optional<TrainingStats> training;
};

/// Index of the largest entry (lowest index on ties); nullopt for a zero vector.
std::optional<std::size_t> max_feature(const Vector& features);

ConfusionCounts evaluate_pairs(const SaeModel& model, const ActivationShard& eval_shard,
                               const std::vector<EvalPair>& pairs);

MetricsReport compute_metrics(const ConfusionCounts& counts,
                              const std::optional<TrainingStats>& training = std::nullopt);

struct BaselineResult {
  double p_same = 0.0;
  double p_diff = 0.0;
  ConfusionCounts counts;
  MetricsReport metrics;
};

/// Expected PS-Eval outcome of a model whose max feature is uniformly random,
/// with P_same = 1 / C(M, 2).
BaselineResult random_baseline(std::size_t n_features, std::size_t n_pairs, std::size_t n_same);

/// 1 - cos(a, b), clamped to [0, 2]; nullopt if either vector is zero.
std::optional<double> cosine_distance(const Vector& a, const Vector& b);

struct DistinctionEntry {
  std::string pair_id;
  std::optional<double> llm_distance;
  std::optional<double> sae_distance;
};

/// Cosine distances between the two contexts of every poly-context pair,
/// in raw activation space and in SAE feature space.
struct DistinctionReport {
  std::vector<DistinctionEntry> entries;
  std::vector<double> llm_distances;  // defined values only
  std::vector<double> sae_distances;
  std::optional<double> llm_mean;
  std::optional<double> sae_mean;
};

DistinctionReport polysemous_distinction(const SaeModel& model, const ActivationShard& eval_shard,
                                         const std::vector<EvalPair>& pairs);

struct HistogramBin {
  double lo = 0.0;
  double hi = 0.0;
  std::size_t llm_count = 0;
  std::size_t sae_count = 0;
};

/// `n_bins` uniform bins over [0, 1]; 1.0 lands in the last bin and values
/// above 1 are not binned.
std::vector<HistogramBin> distinction_histogram(const DistinctionReport& report,
                                                std::size_t n_bins = 50);

}  // namespace psae
