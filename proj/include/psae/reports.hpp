#pragma once

#include <cstdint>
#include <optional>
#include <string>

#include <nlohmann/json.hpp>

#include "psae/logit_lens.hpp"
#include "psae/ps_eval.hpp"

namespace psae {

/// Run settings echoed next to every metrics report.
struct ConfigEcho {
  double lambda = 0.0;
  std::size_t expand_ratio = 0;
  std::string activation;
  std::optional<std::int64_t> layer;
  std::optional<std::string> component;
  std::optional<std::uint64_t> seed;
};

/// "n/a" for undefined metrics, otherwise %.12g.
std::string format_metric(const Metric& m);

nlohmann::ordered_json metrics_json(const MetricsReport& report, const ConfigEcho& echo);

/// pair_id,llm_distance,sae_distance
std::string distinction_csv(const DistinctionReport& report);
/// bin_lo,bin_hi,llm_count,sae_count
std::string histogram_csv(const std::vector<HistogramBin>& bins);

std::string baseline_table(const BaselineResult& baseline, std::size_t n_features,
                           std::size_t n_pairs, std::size_t n_same);

nlohmann::ordered_json lens_json(const LensPair& lens, const EvalPair& pair);
/// Two-column text table, one row per rank.
std::string lens_table(const LensPair& lens, const EvalPair& pair);

}  // namespace psae
