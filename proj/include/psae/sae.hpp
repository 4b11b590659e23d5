#pragma once

#include <cstddef>
#include <cstdint>

#include "psae/activation.hpp"
#include "psae/types.hpp"

namespace psae {

struct SaeConfig {
  std::size_t d_in = 768;
  std::size_t expand_ratio = 32;
  double lambda = 0.05;
  ActivationSpec activation;
  // Ghost-grads auxiliary loss.
  double alpha = 1.0 / 32.0;
  std::size_t k_aux = 512;
  std::uint64_t dead_token_threshold = 10'000'000;
  std::uint64_t dead_step_window = 1000;

  std::size_t n_features() const noexcept { return expand_ratio * d_in; }
  void validate() const;

  bool operator==(const SaeConfig&) const = default;
};

/// Single-layer sparse autoencoder.
///
///   f(x)  = act(W_enc (x - b_dec) + b_enc)
///   x^(f) = W_dec f + b_dec
///
/// W_enc is M x d_in, W_dec is d_in x M; columns of W_dec are the feature
/// directions and are kept at unit norm by the trainer. `theta` is length M
/// for every kind and only read by the JumpReLU variants.
struct SaeModel {
  SaeConfig config;
  Matrix w_enc;
  Vector b_enc;
  Matrix w_dec;
  Vector b_dec;
  Vector theta;

  std::size_t d_in() const noexcept { return config.d_in; }
  std::size_t n_features() const noexcept { return config.n_features(); }

  /// Shapes, finiteness, non-negative thresholds.
  void validate() const;
};

/// W_enc ~ U(-1, 1) / sqrt(d_in); W_dec = W_enc^T with unit-norm columns;
/// zero biases; theta broadcast from the configured scalar.
SaeModel init_model(const SaeConfig& config, std::uint64_t seed);

/// Rescales each W_dec column to unit L2 norm. Zero columns are left alone.
void normalize_decoder(SaeModel& model);

Vector preactivation(const SaeModel& model, const Vector& x);
Matrix preactivation(const SaeModel& model, const Matrix& batch);

Vector encode(const SaeModel& model, const Vector& x);
Vector decode(const SaeModel& model, const Vector& features);

struct ForwardResult {
  Matrix features;  // B x M
  Matrix recon;     // B x d_in
};

ForwardResult forward(const SaeModel& model, const Matrix& batch);

/// Mean over rows of the number of strictly positive entries.
double l0_count(const Matrix& features);
/// l0_count divided by the number of features M.
double l0_normalized(const Matrix& features);

}  // namespace psae
