#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "psae/ps_eval.hpp"
#include "psae/reports.hpp"
#include "psae/run_config.hpp"
#include "psae/trainer.hpp"

namespace psae {

// Run directory layout:
//   config.txt      resolved RunConfig
//   checkpoint.sae  trained model
//   train_log.csv   step,mse,l1,l0,l0_normalized,dead_1000,aux
//   metrics.json    training stats; eval adds confusion counts and metrics
//   distinction.csv / distinction_hist.csv   after eval

struct TrainRunOptions {
  RunConfig config;
  std::vector<std::filesystem::path> activations;
  std::filesystem::path out_dir;
  /// Rows used for the final mse/l0 measurement (0 = all).
  std::size_t measure_rows = 65'536;
};

struct TrainRunResult {
  TrainResult train;
  DatasetStats stats;
  TrainingStats training_stats() const;
};

/// Trains and writes config, checkpoint, log and a stats-only metrics.json.
/// On divergence the last good model is written as checkpoint.sae and the
/// DivergenceError is rethrown.
TrainRunResult run_train(const TrainRunOptions& options, const TrainCallback& on_log = {});

struct EvalRunOptions {
  std::filesystem::path checkpoint;
  std::filesystem::path eval_shard;
  std::filesystem::path eval_set;
  std::filesystem::path out_dir;
  std::optional<std::uint64_t> seed;
  std::optional<TrainingStats> training;
};

struct EvalRunResult {
  MetricsReport metrics;
  DistinctionReport distinction;
  EvalSet eval_set;
};

/// Writes metrics.json, distinction.csv and distinction_hist.csv. Training
/// stats default to those in a metrics.json beside the checkpoint.
EvalRunResult run_eval(const EvalRunOptions& options);

enum class SweepAxis { lambda, expand_ratio, activation, layer, component };
std::string to_string(SweepAxis axis);
SweepAxis sweep_axis_from_string(std::string_view name);

struct SweepSpec {
  SweepAxis axis = SweepAxis::lambda;
  std::vector<std::string> values;
  std::vector<std::uint64_t> seeds{0};
  RunConfig base;
  /// Activation shard paths; "{value}" is replaced by the axis value.
  std::vector<std::string> activations;
  /// Optional evaluation inputs; the shard path may also contain "{value}".
  std::optional<std::string> eval_shard;
  std::optional<std::string> eval_set;
  std::filesystem::path root;
  bool resume = false;
  std::size_t jobs = 1;
  std::size_t measure_rows = 65'536;

  void validate() const;
};

struct SweepRow {
  std::string value;
  std::uint64_t seed = 0;
  DatasetStats stats;
  std::size_t dead_1000 = 0;
  std::optional<MetricsReport> metrics;
};

struct SweepFailure {
  std::string value;
  std::uint64_t seed = 0;
  std::string message;
};

struct SweepOutcome {
  std::vector<SweepRow> rows;  // grid order, failures omitted
  std::vector<SweepFailure> failures;
  bool ok() const noexcept { return failures.empty(); }
};

std::filesystem::path sweep_run_dir(const SweepSpec& spec, const std::string& value,
                                    std::uint64_t seed);

/// Trains (and evaluates) every (value, seed) point; writes sweep.csv,
/// sweep_mean.csv and failures.txt under spec.root. Finished points are
/// skipped when spec.resume is set.
SweepOutcome run_sweep(const SweepSpec& spec,
                       const std::function<void(const std::string&)>& progress = {});

}  // namespace psae
