#pragma once

#include <cstddef>
#include <cstdint>

#include "psae/shard.hpp"
#include <Eigen/SparseCore>

#include "psae/types.hpp"

namespace psae {

/// Sparse-superposition toy data with a known dictionary.
struct SyntheticSpec {
  std::size_t d_in = 64;
  std::size_t n_true_features = 256;
  double avg_active = 5.0;
  std::size_t n_samples = 200'000;
  std::uint64_t seed = 0;
  /// Use the identity as dictionary; requires n_true_features == d_in.
  bool identity_dictionary = false;

  void validate() const;
};

struct SyntheticData {
  ActivationShard shard;
  Matrix dictionary;  // d_in x n_true_features, unit-norm columns
  Eigen::SparseMatrix<double, Eigen::RowMajor> codes;  // n_samples x n_true_features, >= 0
};

/// Each feature is active independently with probability
/// avg_active / n_true_features, with coefficient ~ U[0.5, 1.5];
/// x = dictionary * codes.
SyntheticData generate_synthetic(const SyntheticSpec& spec);

/// For each true dictionary column, the best cosine similarity with any
/// learned decoder column, averaged over the true columns.
double mean_max_cosine(const Matrix& true_dictionary, const Matrix& learned_decoder);

}  // namespace psae
