#include "psae/ps_eval.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "psae/error.hpp"

namespace psae {

ConfusionCounts& ConfusionCounts::operator+=(const ConfusionCounts& other) {
  tp += other.tp;
  fp += other.fp;
  fn += other.fn;
  tn += other.tn;
  abstained += other.abstained;
  return *this;
}

std::optional<std::size_t> max_feature(const Vector& features) {
  std::optional<std::size_t> best;
  double best_value = 0.0;
  for (Eigen::Index j = 0; j < features.size(); ++j) {
    if (features[j] > best_value) {
      best_value = features[j];
      best = static_cast<std::size_t>(j);
    }
  }
  return best;
}

namespace {

void check_compatible(const SaeModel& model, const ActivationShard& shard,
                      const std::vector<EvalPair>& pairs) {
  if (shard.cols() != model.d_in()) {
    throw DimensionError("eval shard d_model " + std::to_string(shard.cols()) +
                         " does not match model d_in " + std::to_string(model.d_in()));
  }
  for (const auto& p : pairs) {
    if (p.row_index1 >= shard.rows() || p.row_index2 >= shard.rows()) {
      throw DimensionError("pair '" + p.pair_id + "' references a row outside the eval shard (" +
                           std::to_string(shard.rows()) + " rows)");
    }
  }
}

// Encodes every shard row referenced by `pairs`, in chunks, and hands each
// (row, features) to `visit`.
template <class Visit>
void encode_referenced_rows(const SaeModel& model, const ActivationShard& shard,
                            const std::vector<EvalPair>& pairs, Visit&& visit) {
  std::vector<std::size_t> rows;
  rows.reserve(pairs.size() * 2);
  for (const auto& p : pairs) {
    rows.push_back(p.row_index1);
    rows.push_back(p.row_index2);
  }
  std::sort(rows.begin(), rows.end());
  rows.erase(std::unique(rows.begin(), rows.end()), rows.end());

  constexpr std::size_t kChunk = 256;
  for (std::size_t start = 0; start < rows.size(); start += kChunk) {
    const std::size_t n = std::min(kChunk, rows.size() - start);
    Matrix batch(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(shard.cols()));
    for (std::size_t i = 0; i < n; ++i) {
      const auto r = shard.row(rows[start + i]);
      std::copy(r.begin(), r.end(), batch.row(static_cast<Eigen::Index>(i)).data());
    }
    const Matrix features =
        apply_activation(model.config.activation, model.theta, preactivation(model, batch));
    for (std::size_t i = 0; i < n; ++i) {
      visit(rows[start + i], Vector(features.row(static_cast<Eigen::Index>(i)).transpose()));
    }
  }
}

Metric ratio(double num, double den) {
  if (den == 0.0) return std::nullopt;
  return num / den;
}

Metric harmonic(const Metric& a, const Metric& b) {
  if (!a || !b || *a + *b == 0.0) return std::nullopt;
  return 2.0 * *a * *b / (*a + *b);
}

}  // namespace

ConfusionCounts evaluate_pairs(const SaeModel& model, const ActivationShard& eval_shard,
                               const std::vector<EvalPair>& pairs) {
  check_compatible(model, eval_shard, pairs);
  std::vector<std::optional<std::size_t>> argmax(eval_shard.rows());
  encode_referenced_rows(model, eval_shard, pairs,
                         [&](std::size_t row, const Vector& f) { argmax[row] = max_feature(f); });

  ConfusionCounts counts;
  for (const auto& p : pairs) {
    const auto& a = argmax[p.row_index1];
    const auto& b = argmax[p.row_index2];
    if (!a || !b) {
      ++counts.abstained;
      continue;
    }
    const bool same_feature = *a == *b;
    if (p.label == PairLabel::same) {
      (same_feature ? counts.tp : counts.fn) += 1.0;
    } else {
      (same_feature ? counts.fp : counts.tn) += 1.0;
    }
  }
  return counts;
}

MetricsReport compute_metrics(const ConfusionCounts& counts,
                              const std::optional<TrainingStats>& training) {
  const auto& c = counts;
  MetricsReport r;
  r.counts = c;
  r.accuracy = ratio(c.tp + c.tn, c.tp + c.fp + c.tn + c.fn);
  r.recall = ratio(c.tp, c.tp + c.fn);
  r.precision = ratio(c.tp, c.tp + c.fp);
  r.specificity = ratio(c.tn, c.tn + c.fp);
  r.sensitivity = ratio(c.tn, c.tn + c.fn);
  r.s_f1 = harmonic(r.recall, r.precision);
  r.d_f1 = harmonic(r.specificity, r.sensitivity);
  if (r.s_f1 && r.d_f1) r.average_f1 = 0.5 * (*r.s_f1 + *r.d_f1);
  r.training = training;
  return r;
}

BaselineResult random_baseline(std::size_t n_features, std::size_t n_pairs, std::size_t n_same) {
  if (n_features < 2) throw ConfigError("random baseline needs at least 2 features");
  if (n_same > n_pairs) throw ConfigError("n_same cannot exceed the number of pairs");
  BaselineResult out;
  const auto m = static_cast<double>(n_features);
  // One over the number of unordered feature pairs, C(M, 2).
  out.p_same = 2.0 / (m * (m - 1.0));
  out.p_diff = 1.0 - out.p_same;
  const auto same = static_cast<double>(n_same);
  const auto diff = static_cast<double>(n_pairs - n_same);
  out.counts.tp = same * out.p_same;
  out.counts.fn = same * out.p_diff;
  out.counts.fp = diff * out.p_same;
  out.counts.tn = diff * out.p_diff;
  out.metrics = compute_metrics(out.counts);
  return out;
}

std::optional<double> cosine_distance(const Vector& a, const Vector& b) {
  if (a.size() != b.size()) throw DimensionError("cosine distance of vectors with different lengths");
  const double na = a.norm();
  const double nb = b.norm();
  if (na == 0.0 || nb == 0.0) return std::nullopt;
  return std::clamp(1.0 - a.dot(b) / (na * nb), 0.0, 2.0);
}

DistinctionReport polysemous_distinction(const SaeModel& model, const ActivationShard& eval_shard,
                                         const std::vector<EvalPair>& pairs) {
  std::vector<EvalPair> poly;
  std::copy_if(pairs.begin(), pairs.end(), std::back_inserter(poly),
               [](const EvalPair& p) { return p.label == PairLabel::different; });
  check_compatible(model, eval_shard, poly);

  std::vector<Vector> features(eval_shard.rows());
  encode_referenced_rows(model, eval_shard, poly,
                         [&](std::size_t row, const Vector& f) { features[row] = f; });

  DistinctionReport report;
  for (const auto& p : poly) {
    DistinctionEntry e;
    e.pair_id = p.pair_id;
    e.llm_distance = cosine_distance(eval_shard.row_vector(p.row_index1),
                                     eval_shard.row_vector(p.row_index2));
    e.sae_distance = cosine_distance(features[p.row_index1], features[p.row_index2]);
    if (e.llm_distance) report.llm_distances.push_back(*e.llm_distance);
    if (e.sae_distance) report.sae_distances.push_back(*e.sae_distance);
    report.entries.push_back(std::move(e));
  }
  const auto mean = [](const std::vector<double>& v) -> std::optional<double> {
    if (v.empty()) return std::nullopt;
    return std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
  };
  report.llm_mean = mean(report.llm_distances);
  report.sae_mean = mean(report.sae_distances);
  return report;
}

std::vector<HistogramBin> distinction_histogram(const DistinctionReport& report,
                                                std::size_t n_bins) {
  if (n_bins == 0) throw ConfigError("histogram needs at least one bin");
  std::vector<HistogramBin> bins(n_bins);
  const double width = 1.0 / static_cast<double>(n_bins);
  for (std::size_t i = 0; i < n_bins; ++i) {
    bins[i].lo = static_cast<double>(i) * width;
    bins[i].hi = static_cast<double>(i + 1) * width;
  }
  const auto bin_of = [&](double v) -> std::optional<std::size_t> {
    if (v < 0.0 || v > 1.0) return std::nullopt;
    return std::min(n_bins - 1, static_cast<std::size_t>(v * static_cast<double>(n_bins)));
  };
  for (double v : report.llm_distances) {
    if (auto b = bin_of(v)) ++bins[*b].llm_count;
  }
  for (double v : report.sae_distances) {
    if (auto b = bin_of(v)) ++bins[*b].sae_count;
  }
  return bins;
}

}  // namespace psae
