#pragma once

#include <cstddef>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

namespace psae {

/// token_id -> token_string, indexed densely by id.
class VocabTable {
 public:
  VocabTable() = default;
  /// `entries` may be in any order; ids must be unique and cover 0..V-1.
  explicit VocabTable(std::vector<std::pair<std::size_t, std::string>> entries);

  std::size_t size() const noexcept { return tokens_.size(); }
  const std::string& token(std::size_t id) const { return tokens_.at(id); }

 private:
  std::vector<std::string> tokens_;
};

VocabTable read_vocab(const std::filesystem::path& path,
                      std::optional<std::size_t> expected_size = std::nullopt);
void write_vocab(const std::filesystem::path& path, const VocabTable& vocab);

}  // namespace psae
