#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

namespace psae {

enum class PairLabel : int { different = 0, same = 1 };

/// Two contexts sharing a single-token target word. Row indices point into
/// the evaluation shard at the target token of each formatted prompt.
struct EvalPair {
  std::string pair_id;
  std::string target_word;
  std::int64_t target_token_id = 0;
  std::string context1_text;
  std::string context2_text;
  PairLabel label = PairLabel::different;
  std::size_t row_index1 = 0;
  std::size_t row_index2 = 0;

  bool operator==(const EvalPair&) const = default;
};

struct EvalSet {
  std::vector<EvalPair> pairs;
  std::size_t n_different = 0;
  std::size_t n_same = 0;

  bool balanced() const noexcept { return n_different == n_same; }
};

/// Parses a JSON-lines evaluation set. Blank lines are skipped. When
/// `shard_rows` is given, every row index must be < shard_rows.
/// Errors carry the 1-based line number.
EvalSet read_eval_set(const std::filesystem::path& path,
                      std::optional<std::size_t> shard_rows = std::nullopt);

void write_eval_set(const std::filesystem::path& path, const std::vector<EvalPair>& pairs);

}  // namespace psae
