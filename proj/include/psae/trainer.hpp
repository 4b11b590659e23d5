#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "psae/error.hpp"
#include "psae/sae.hpp"
#include "psae/shard.hpp"
#include "psae/types.hpp"

namespace psae {

/// Loss terms averaged over the batch. total = recon + lambda*sparse + alpha*aux.
struct LossBreakdown {
  double recon = 0.0;
  double sparse = 0.0;
  double aux = 0.0;
  double total = 0.0;
};

/// One entry per trainable tensor; `theta` is only non-zero for jumprelu_ste.
struct Gradients {
  Matrix w_enc;
  Vector b_enc;
  Matrix w_dec;
  Vector b_dec;
  Vector theta;

  static Gradients zeros_like(const SaeModel& model);
  bool all_finite() const;
};

struct TrainerConfig {
  std::size_t batch_size = 8192;
  std::uint64_t total_steps = 200'000;
  double learning_rate = 2e-4;
  double adam_beta1 = 0.9;
  double adam_beta2 = 0.999;
  double adam_eps = 1e-8;
  std::uint64_t seed = 0;
  std::uint64_t log_every = 100;

  /// Large-scale settings (8192 x 200k steps).
  static TrainerConfig full_profile() { return {}; }
  /// Batch 512, 20k steps: minutes on a workstation.
  static TrainerConfig desk_profile();

  void validate() const;
};

/// Optimizer moments plus dead-latent bookkeeping. Two dead rules are tracked:
/// the token rule gates the ghost-grads loss, the step-window rule is reported.
struct TrainState {
  std::uint64_t step = 0;
  std::uint64_t tokens_seen = 0;
  Gradients adam_m;
  Gradients adam_v;
  std::vector<std::uint64_t> last_fired_token;
  std::vector<std::uint64_t> last_fired_step;
  std::vector<bool> dead_mask;
  std::uint64_t dead_token_threshold = 10'000'000;
  std::uint64_t dead_step_window = 1000;

  static TrainState fresh(const SaeModel& model);

  std::size_t dead_count() const;
  /// Features that have not fired during the last dead_step_window steps.
  std::size_t dead_count_window() const;
  void refresh_dead_mask();
};

/// Raised when a loss or gradient stops being finite.
class NumericError : public Error {
 public:
  using Error::Error;
};

/// Raised by train() on divergence; carries the model from the last good step.
class DivergenceError : public Error {
 public:
  DivergenceError(const std::string& what, SaeModel last_good, std::uint64_t step)
      : Error(what), last_good_(std::move(last_good)), step_(step) {}
  const SaeModel& last_good() const noexcept { return last_good_; }
  std::uint64_t step() const noexcept { return step_; }

 private:
  SaeModel last_good_;
  std::uint64_t step_;
};

struct GradientOptions {
  /// Remove from each W_dec column gradient its component along that column.
  bool project_decoder = true;
};

/// Loss, features and (optionally) gradients from a single forward pass.
struct Evaluation {
  LossBreakdown loss;
  Matrix features;
  Gradients grads;
};

Evaluation evaluate(const SaeModel& model, const Matrix& batch, const TrainState& state,
                    bool with_gradients, GradientOptions options = {});

LossBreakdown compute_loss(const SaeModel& model, const Matrix& batch, const TrainState& state);
Gradients compute_gradients(const SaeModel& model, const Matrix& batch, const TrainState& state,
                            GradientOptions options = {});

/// Adam with bias correction, then W_dec columns renormalized to unit norm.
/// theta is only updated for jumprelu_ste and is clamped at zero.
void apply_step(SaeModel& model, TrainState& state, const Gradients& grads,
                const TrainerConfig& config);

/// Marks every feature with a positive entry in `features` as fired at the
/// current (tokens_seen, step), then advances tokens_seen by the batch size.
void update_dead_tracking(TrainState& state, const Matrix& features);

struct TrainLogRow {
  std::uint64_t step = 0;
  double mse = 0.0;
  double l1 = 0.0;
  double l0 = 0.0;
  double l0_normalized = 0.0;
  std::size_t dead_1000 = 0;
  double aux = 0.0;
};

struct TrainLog {
  std::vector<TrainLogRow> rows;

  /// "step,mse,l1,l0,l0_normalized,dead_1000,aux" with fixed number formatting.
  std::string to_csv() const;
};

struct TrainResult {
  SaeModel model;
  TrainState state;
  TrainLog log;
};

using TrainCallback = std::function<void(const TrainLogRow&)>;
/// Called after every optimizer step with the updated model and state.
using StepCallback = std::function<void(const SaeModel&, const TrainState&)>;

/// Samples batches with replacement from the concatenation of `shards`.
/// A log row is recorded at step 1, every log_every steps and at the end.
TrainResult train(SaeModel model, const std::vector<ActivationShard>& shards,
                  const TrainerConfig& config, const TrainCallback& on_log = {},
                  const StepCallback& on_step = {});

/// Reconstruction and sparsity over whole shards, in row order.
struct DatasetStats {
  std::size_t n_rows = 0;
  double mse = 0.0;  // mean over rows of the squared L2 residual
  double l1 = 0.0;
  double l0 = 0.0;
  double l0_normalized = 0.0;
};

/// `max_rows` = 0 means every row.
DatasetStats measure_dataset(const SaeModel& model, const std::vector<ActivationShard>& shards,
                             std::size_t max_rows = 0);

}  // namespace psae
