#include "psae/logit_lens.hpp"

#include <algorithm>
#include <numeric>

#include "psae/error.hpp"
#include "psae/ps_eval.hpp"

namespace psae {

LensResult lens(const SaeModel& model, const ActivationShard& unembedding,
                const VocabTable& vocab, const Vector& x, std::size_t top_k) {
  if (unembedding.header().component_kind != ComponentKind::unembedding) {
    throw FormatError("shard is not an unembedding matrix (component_kind " +
                      to_string(unembedding.header().component_kind) + ")");
  }
  if (unembedding.cols() != model.d_in()) {
    throw DimensionError("unembedding d_model " + std::to_string(unembedding.cols()) +
                         " does not match model d_in " + std::to_string(model.d_in()));
  }
  if (vocab.size() != unembedding.rows()) {
    throw DimensionError("vocab has " + std::to_string(vocab.size()) + " tokens, unembedding has " +
                         std::to_string(unembedding.rows()) + " rows");
  }
  const Vector f = encode(model, x);
  const auto best = max_feature(f);
  if (!best) throw Error("no feature is active for this input");

  LensResult out;
  out.feature_index = *best;
  out.feature_value = f[static_cast<Eigen::Index>(*best)];
  const Vector direction = out.feature_value * model.w_dec.col(static_cast<Eigen::Index>(*best));

  const std::size_t vocab_size = unembedding.rows();
  std::vector<double> logits(vocab_size);
  for (std::size_t t = 0; t < vocab_size; ++t) {
    const auto row = unembedding.row(t);
    double acc = 0.0;
    for (std::size_t i = 0; i < row.size(); ++i) acc += static_cast<double>(row[i]) * direction[static_cast<Eigen::Index>(i)];
    logits[t] = acc;
  }

  std::vector<std::size_t> order(vocab_size);
  std::iota(order.begin(), order.end(), std::size_t{0});
  const std::size_t k = std::min(top_k, vocab_size);
  std::partial_sort(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(k), order.end(),
                    [&](std::size_t a, std::size_t b) {
                      return logits[a] != logits[b] ? logits[a] > logits[b] : a < b;
                    });
  out.entries.reserve(k);
  for (std::size_t i = 0; i < k; ++i) {
    out.entries.push_back({order[i], vocab.token(order[i]), logits[order[i]]});
  }
  return out;
}

LensPair lens_pair(const SaeModel& model, const ActivationShard& unembedding,
                   const VocabTable& vocab, const ActivationShard& eval_shard,
                   const EvalPair& pair, std::size_t top_k) {
  LensPair out;
  out.context1 = lens(model, unembedding, vocab, eval_shard.row_vector(pair.row_index1), top_k);
  out.context1.pair_id = pair.pair_id;
  out.context1.context_index = 1;
  out.context2 = lens(model, unembedding, vocab, eval_shard.row_vector(pair.row_index2), top_k);
  out.context2.pair_id = pair.pair_id;
  out.context2.context_index = 2;
  return out;
}

}  // namespace psae
