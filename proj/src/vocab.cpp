#include "psae/vocab.hpp"

#include <algorithm>
#include <fstream>

#include <nlohmann/json.hpp>

#include "psae/error.hpp"

namespace psae {

VocabTable::VocabTable(std::vector<std::pair<std::size_t, std::string>> entries) {
  tokens_.resize(entries.size());
  std::vector<bool> filled(entries.size(), false);
  for (auto& [id, token] : entries) {
    if (id >= entries.size()) {
      throw FormatError("token_id " + std::to_string(id) + " outside 0.." +
                        std::to_string(entries.size() - 1));
    }
    if (filled[id]) throw FormatError("duplicate token_id " + std::to_string(id));
    filled[id] = true;
    tokens_[id] = std::move(token);
  }
}

VocabTable read_vocab(const std::filesystem::path& path, std::optional<std::size_t> expected_size) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open " + path.string());
  std::vector<std::pair<std::size_t, std::string>> entries;
  std::string text;
  std::size_t line = 0;
  while (std::getline(in, text)) {
    ++line;
    if (text.find_first_not_of(" \t\r\n") == std::string::npos) continue;
    try {
      const auto j = nlohmann::json::parse(text);
      const auto id = j.at("token_id").get<std::int64_t>();
      if (id < 0) throw FormatError("negative token_id");
      entries.emplace_back(static_cast<std::size_t>(id), j.at("token_string").get<std::string>());
    } catch (const std::exception& e) {
      throw FormatError("vocab line " + std::to_string(line) + ": " + e.what());
    }
  }
  VocabTable vocab(std::move(entries));
  if (expected_size && vocab.size() != *expected_size) {
    throw FormatError("vocab has " + std::to_string(vocab.size()) + " entries, unembedding has " +
                      std::to_string(*expected_size) + " rows");
  }
  return vocab;
}

void write_vocab(const std::filesystem::path& path, const VocabTable& vocab) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw Error("cannot open for writing: " + path.string());
  for (std::size_t id = 0; id < vocab.size(); ++id) {
    nlohmann::ordered_json j = {{"token_id", id}, {"token_string", vocab.token(id)}};
    out << j.dump() << '\n';
  }
  if (!out) throw Error("write failed: " + path.string());
}

}  // namespace psae
