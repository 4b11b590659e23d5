#include "psae/sae.hpp"

#include <cmath>
#include <random>
#include <string>

#include "psae/error.hpp"

namespace psae {

void SaeConfig::validate() const {
  if (d_in == 0) throw ConfigError("d_in must be positive");
  if (expand_ratio == 0) throw ConfigError("expand_ratio must be >= 1");
  if (!(lambda >= 0.0) || !std::isfinite(lambda)) throw ConfigError("lambda must be >= 0");
  if (!(alpha >= 0.0) || !std::isfinite(alpha)) throw ConfigError("alpha must be >= 0");
  if (k_aux == 0) throw ConfigError("k_aux must be positive");
  if (dead_token_threshold == 0) throw ConfigError("dead_token_threshold must be positive");
  if (dead_step_window == 0) throw ConfigError("dead_step_window must be positive");
  activation.validate(n_features());
}

namespace {

void expect_shape(const char* name, Eigen::Index rows, Eigen::Index cols, std::size_t want_rows,
                  std::size_t want_cols) {
  if (static_cast<std::size_t>(rows) != want_rows || static_cast<std::size_t>(cols) != want_cols) {
    throw DimensionError(std::string(name) + " is " + std::to_string(rows) + "x" +
                         std::to_string(cols) + ", expected " + std::to_string(want_rows) + "x" +
                         std::to_string(want_cols));
  }
}

void expect_input(const SaeModel& model, Eigen::Index width) {
  if (static_cast<std::size_t>(width) != model.d_in()) {
    throw DimensionError("input has width " + std::to_string(width) + ", model expects " +
                         std::to_string(model.d_in()));
  }
}

}  // namespace

void SaeModel::validate() const {
  config.validate();
  const auto m = n_features();
  const auto d = d_in();
  expect_shape("W_enc", w_enc.rows(), w_enc.cols(), m, d);
  expect_shape("b_enc", b_enc.size(), 1, m, 1);
  expect_shape("W_dec", w_dec.rows(), w_dec.cols(), d, m);
  expect_shape("b_dec", b_dec.size(), 1, d, 1);
  expect_shape("theta", theta.size(), 1, m, 1);
  if (!w_enc.allFinite() || !b_enc.allFinite() || !w_dec.allFinite() || !b_dec.allFinite() ||
      !theta.allFinite()) {
    throw FormatError("model parameters contain non-finite values");
  }
  if ((theta.array() < 0.0).any()) throw FormatError("negative JumpReLU threshold");
}

void normalize_decoder(SaeModel& model) {
  for (Eigen::Index j = 0; j < model.w_dec.cols(); ++j) {
    const double norm = model.w_dec.col(j).norm();
    if (norm > 0.0) model.w_dec.col(j) /= norm;
  }
}

SaeModel init_model(const SaeConfig& config, std::uint64_t seed) {
  config.validate();
  const auto m = static_cast<Eigen::Index>(config.n_features());
  const auto d = static_cast<Eigen::Index>(config.d_in);

  SaeModel model;
  model.config = config;
  model.w_enc.resize(m, d);
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> unit(-1.0, 1.0);
  const double scale = 1.0 / std::sqrt(static_cast<double>(config.d_in));
  for (Eigen::Index i = 0; i < m; ++i) {
    for (Eigen::Index j = 0; j < d; ++j) model.w_enc(i, j) = unit(rng) * scale;
  }
  model.w_dec = model.w_enc.transpose();
  normalize_decoder(model);
  model.b_enc = Vector::Zero(m);
  model.b_dec = Vector::Zero(d);
  model.theta = config.activation.uses_threshold() ? Vector::Constant(m, config.activation.theta)
                                                   : Vector::Zero(m);
  return model;
}

Vector preactivation(const SaeModel& model, const Vector& x) {
  expect_input(model, x.size());
  return model.w_enc * (x - model.b_dec) + model.b_enc;
}

Matrix preactivation(const SaeModel& model, const Matrix& batch) {
  expect_input(model, batch.cols());
  Matrix centered = batch.rowwise() - model.b_dec.transpose();
  Matrix pre(batch.rows(), model.w_enc.rows());
  pre.noalias() = centered * model.w_enc.transpose();
  pre.rowwise() += model.b_enc.transpose();
  return pre;
}

Vector encode(const SaeModel& model, const Vector& x) {
  return apply_activation(model.config.activation, model.theta, preactivation(model, x));
}

Vector decode(const SaeModel& model, const Vector& features) {
  if (static_cast<std::size_t>(features.size()) != model.n_features()) {
    throw DimensionError("feature vector has length " + std::to_string(features.size()) +
                         ", model has " + std::to_string(model.n_features()) + " features");
  }
  return model.w_dec * features + model.b_dec;
}

ForwardResult forward(const SaeModel& model, const Matrix& batch) {
  ForwardResult out;
  out.features = apply_activation(model.config.activation, model.theta, preactivation(model, batch));
  out.recon.resize(batch.rows(), batch.cols());
  out.recon.noalias() = out.features * model.w_dec.transpose();
  out.recon.rowwise() += model.b_dec.transpose();
  return out;
}

double l0_count(const Matrix& features) {
  if (features.rows() == 0) return 0.0;
  return static_cast<double>((features.array() > 0.0).count()) /
         static_cast<double>(features.rows());
}

double l0_normalized(const Matrix& features) {
  if (features.cols() == 0) return 0.0;
  return l0_count(features) / static_cast<double>(features.cols());
}

}  // namespace psae
