#include "psae/synthetic.hpp"

#include <random>

#include "psae/error.hpp"

namespace psae {

void SyntheticSpec::validate() const {
  if (d_in == 0 || n_true_features == 0) throw ConfigError("d_in and n_true_features must be positive");
  if (!(avg_active >= 0.0) || avg_active > static_cast<double>(n_true_features)) {
    throw ConfigError("avg_active must be in [0, n_true_features]");
  }
  if (identity_dictionary && n_true_features != d_in) {
    throw ConfigError("identity dictionary needs n_true_features == d_in");
  }
}

SyntheticData generate_synthetic(const SyntheticSpec& spec) {
  spec.validate();
  const auto d = static_cast<Eigen::Index>(spec.d_in);
  const auto n_true = static_cast<Eigen::Index>(spec.n_true_features);
  std::mt19937_64 rng(spec.seed);

  SyntheticData out;
  if (spec.identity_dictionary) {
    out.dictionary = Matrix::Identity(d, n_true);
  } else {
    std::normal_distribution<double> normal(0.0, 1.0);
    out.dictionary.resize(d, n_true);
    for (Eigen::Index i = 0; i < d; ++i) {
      for (Eigen::Index j = 0; j < n_true; ++j) out.dictionary(i, j) = normal(rng);
    }
    for (Eigen::Index j = 0; j < n_true; ++j) out.dictionary.col(j).normalize();
  }

  const double p = spec.avg_active / static_cast<double>(spec.n_true_features);
  std::bernoulli_distribution active(p);
  std::uniform_real_distribution<double> coeff(0.5, 1.5);

  std::vector<Eigen::Triplet<double>> entries;
  entries.reserve(static_cast<std::size_t>(spec.avg_active * static_cast<double>(spec.n_samples) * 1.2) + 16);
  std::vector<float> data(spec.n_samples * spec.d_in, 0.0f);
  Vector x(d);
  for (std::size_t s = 0; s < spec.n_samples; ++s) {
    x.setZero();
    for (Eigen::Index j = 0; j < n_true; ++j) {
      if (!active(rng)) continue;
      const double c = coeff(rng);
      entries.emplace_back(static_cast<Eigen::Index>(s), j, c);
      x += c * out.dictionary.col(j);
    }
    for (Eigen::Index i = 0; i < d; ++i) data[s * spec.d_in + static_cast<std::size_t>(i)] = static_cast<float>(x[i]);
  }
  out.codes.resize(static_cast<Eigen::Index>(spec.n_samples), n_true);
  out.codes.setFromTriplets(entries.begin(), entries.end());

  ShardHeader header;
  header.model_name = "synthetic";
  header.layer_index = 0;
  header.component_kind = ComponentKind::residual;
  header.d_model = spec.d_in;
  header.n_rows = spec.n_samples;
  out.shard = ActivationShard(std::move(header), std::move(data));
  return out;
}

double mean_max_cosine(const Matrix& true_dictionary, const Matrix& learned_decoder) {
  if (true_dictionary.rows() != learned_decoder.rows()) {
    throw DimensionError("dictionaries have different input dimensions");
  }
  if (true_dictionary.cols() == 0 || learned_decoder.cols() == 0) return 0.0;
  Matrix a = true_dictionary;
  Matrix b = learned_decoder;
  for (Eigen::Index j = 0; j < a.cols(); ++j) {
    if (a.col(j).norm() > 0.0) a.col(j).normalize();
  }
  for (Eigen::Index j = 0; j < b.cols(); ++j) {
    if (b.col(j).norm() > 0.0) b.col(j).normalize();
  }
  const Matrix cos = a.transpose() * b;
  return cos.rowwise().maxCoeff().mean();
}

}  // namespace psae
