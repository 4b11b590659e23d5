#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include "psae/eval_set.hpp"
#include "psae/sae.hpp"
#include "psae/shard.hpp"
#include "psae/vocab.hpp"

namespace psae {

struct LensEntry {
  std::size_t token_id = 0;
  std::string token;
  double logit = 0.0;
};

struct LensResult {
  std::string pair_id;
  int context_index = 1;
  std::size_t feature_index = 0;
  double feature_value = 0.0;
  std::vector<LensEntry> entries;  // logit descending, ties by lower token id
};

/// Top `top_k` vocabulary logits of the max feature's value-scaled decoder
/// direction, f_j* * W_dec[:, j*], projected through the unembedding rows.
LensResult lens(const SaeModel& model, const ActivationShard& unembedding,
                const VocabTable& vocab, const Vector& x, std::size_t top_k);

struct LensPair {
  LensResult context1;
  LensResult context2;
  bool feature_differs() const noexcept {
    return context1.feature_index != context2.feature_index;
  }
};

LensPair lens_pair(const SaeModel& model, const ActivationShard& unembedding,
                   const VocabTable& vocab, const ActivationShard& eval_shard,
                   const EvalPair& pair, std::size_t top_k);

}  // namespace psae
