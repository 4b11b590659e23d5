#include "psae/eval_set.hpp"

#include <fstream>
#include <set>
#include <sstream>

#include <nlohmann/json.hpp>

#include "psae/error.hpp"

namespace psae {
namespace {

[[noreturn]] void fail(std::size_t line, const std::string& msg) {
  throw FormatError("eval set line " + std::to_string(line) + ": " + msg);
}

std::size_t row_index(const nlohmann::json& j, const char* key, std::size_t line) {
  const auto v = j.at(key).get<std::int64_t>();
  if (v < 0) fail(line, std::string(key) + " is negative");
  return static_cast<std::size_t>(v);
}

bool is_blank(const std::string& s) {
  return s.find_first_not_of(" \t\r\n") == std::string::npos;
}

}  // namespace

EvalSet read_eval_set(const std::filesystem::path& path, std::optional<std::size_t> shard_rows) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open " + path.string());

  EvalSet out;
  std::set<std::string> seen_ids;
  std::string text;
  std::size_t line = 0;
  while (std::getline(in, text)) {
    ++line;
    if (is_blank(text)) continue;
    EvalPair pair;
    try {
      const auto j = nlohmann::json::parse(text);
      pair.pair_id = j.at("pair_id").get<std::string>();
      pair.target_word = j.at("target_word").get<std::string>();
      pair.target_token_id = j.at("target_token_id").get<std::int64_t>();
      pair.context1_text = j.at("context1_text").get<std::string>();
      pair.context2_text = j.at("context2_text").get<std::string>();
      const auto label = j.at("label").get<std::int64_t>();
      if (label != 0 && label != 1) fail(line, "label must be 0 or 1, got " + std::to_string(label));
      pair.label = static_cast<PairLabel>(label);
      pair.row_index1 = row_index(j, "row_index1", line);
      pair.row_index2 = row_index(j, "row_index2", line);
    } catch (const nlohmann::json::exception& e) {
      fail(line, e.what());
    }
    if (pair.row_index1 == pair.row_index2) fail(line, "row_index1 equals row_index2");
    if (shard_rows && (pair.row_index1 >= *shard_rows || pair.row_index2 >= *shard_rows)) {
      fail(line, "row index out of range for a shard with " + std::to_string(*shard_rows) + " rows");
    }
    if (!seen_ids.insert(pair.pair_id).second) fail(line, "duplicate pair_id '" + pair.pair_id + "'");
    (pair.label == PairLabel::same ? out.n_same : out.n_different) += 1;
    out.pairs.push_back(std::move(pair));
  }
  return out;
}

void write_eval_set(const std::filesystem::path& path, const std::vector<EvalPair>& pairs) {
  std::ostringstream out;
  for (const auto& p : pairs) {
    nlohmann::ordered_json j = {{"pair_id", p.pair_id},
                                {"target_word", p.target_word},
                                {"target_token_id", p.target_token_id},
                                {"context1_text", p.context1_text},
                                {"context2_text", p.context2_text},
                                {"label", static_cast<int>(p.label)},
                                {"row_index1", p.row_index1},
                                {"row_index2", p.row_index2}};
    out << j.dump() << '\n';
  }
  std::ofstream f(path, std::ios::trunc);
  if (!f) throw Error("cannot open for writing: " + path.string());
  f << out.str();
  if (!f) throw Error("write failed: " + path.string());
}

}  // namespace psae
