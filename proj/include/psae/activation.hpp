#pragma once

#include <cstddef>
#include <string>
#include <string_view>

#include "psae/types.hpp"

namespace psae {

enum class ActivationKind { relu, topk, jumprelu, jumprelu_ste };

std::string to_string(ActivationKind kind);
ActivationKind activation_from_string(std::string_view name);

/// Configuration-level description of the latent nonlinearity. `theta` is the
/// scalar every per-feature threshold starts from (JumpReLU kinds only).
struct ActivationSpec {
  ActivationKind kind = ActivationKind::relu;
  std::size_t k = 0;
  double theta = 1e-3;
  double ste_bandwidth = 1e-3;

  static ActivationSpec relu() { return {}; }
  static ActivationSpec topk(std::size_t k) { return {ActivationKind::topk, k}; }
  static ActivationSpec jumprelu(double theta) {
    return {ActivationKind::jumprelu, 0, theta, 1e-3};
  }
  static ActivationSpec jumprelu_ste(double theta, double bandwidth = 1e-3) {
    return {ActivationKind::jumprelu_ste, 0, theta, bandwidth};
  }

  bool uses_threshold() const noexcept {
    return kind == ActivationKind::jumprelu || kind == ActivationKind::jumprelu_ste;
  }
  /// Throws ConfigError when the spec cannot be used with `n_features` latents.
  void validate(std::size_t n_features) const;

  /// "relu", "topk:384", "jumprelu:0.001", "jumprelu_ste:0.001" or
  /// "jumprelu_ste:0.001:0.0005" (threshold, then bandwidth when not the default).
  std::string label() const;
  static ActivationSpec parse_label(std::string_view label);

  bool operator==(const ActivationSpec&) const = default;
};

/// Applies the nonlinearity to one pre-activation vector. `theta` holds the
/// per-feature thresholds and is ignored for relu/topk.
///
///  relu          max(z, 0)
///  topk          relu, then keep the k largest positive entries; ties go to
///                the lower index
///  jumprelu(_ste) z if z > theta_j else 0  (H(0) = 0)
Vector apply_activation(const ActivationSpec& act, const Vector& theta, const Vector& preact);

/// Row-wise apply_activation over a batch of pre-activations.
Matrix apply_activation(const ActivationSpec& act, const Vector& theta, const Matrix& preact);

}  // namespace psae
