#include "psae/checkpoint.hpp"

#include <nlohmann/json.hpp>

#include "psae/error.hpp"
#include "psae/shard.hpp"

namespace psae {
namespace {

nlohmann::json config_json(const SaeConfig& c) {
  return {{"d_in", c.d_in},
          {"expand_ratio", c.expand_ratio},
          {"lambda", c.lambda},
          {"activation",
           {{"kind", to_string(c.activation.kind)},
            {"k", c.activation.k},
            {"theta", c.activation.theta},
            {"ste_bandwidth", c.activation.ste_bandwidth}}},
          {"alpha", c.alpha},
          {"k_aux", c.k_aux},
          {"dead_token_threshold", c.dead_token_threshold},
          {"dead_step_window", c.dead_step_window}};
}

SaeConfig config_from_json(const nlohmann::json& j) {
  SaeConfig c;
  c.d_in = j.at("d_in").get<std::size_t>();
  c.expand_ratio = j.at("expand_ratio").get<std::size_t>();
  c.lambda = j.at("lambda").get<double>();
  const auto& a = j.at("activation");
  c.activation.kind = activation_from_string(a.at("kind").get<std::string>());
  c.activation.k = a.at("k").get<std::size_t>();
  c.activation.theta = a.at("theta").get<double>();
  c.activation.ste_bandwidth = a.at("ste_bandwidth").get<double>();
  c.alpha = j.at("alpha").get<double>();
  c.k_aux = j.at("k_aux").get<std::size_t>();
  c.dead_token_threshold = j.at("dead_token_threshold").get<std::uint64_t>();
  c.dead_step_window = j.at("dead_step_window").get<std::uint64_t>();
  return c;
}

void append_segment(std::string& out, std::string_view name, const double* data, std::size_t n) {
  detail::append_u32(out, static_cast<std::uint32_t>(name.size()));
  out.append(name);
  detail::append_u64(out, n);
  for (std::size_t i = 0; i < n; ++i) detail::append_f64(out, data[i]);
}

void read_segment(detail::ByteReader& reader, std::string_view name, double* data, std::size_t n) {
  const auto name_len = reader.u32();
  const auto got = reader.take(name_len);
  if (got != name) {
    throw FormatError("expected segment '" + std::string(name) + "', found '" + std::string(got) + "'");
  }
  const auto count = reader.u64();
  if (count != n) {
    throw FormatError("segment " + std::string(name) + " has " + std::to_string(count) +
                      " values, expected " + std::to_string(n));
  }
  if (reader.remaining() < n * 8) throw FormatError("truncated segment " + std::string(name));
  for (std::size_t i = 0; i < n; ++i) data[i] = reader.f64();
}

template <class T>
std::size_t count(const T& t) {
  return static_cast<std::size_t>(t.size());
}

}  // namespace

void write_checkpoint(const std::filesystem::path& path, const SaeModel& model) {
  model.validate();
  const bool with_theta = model.config.activation.uses_threshold();
  const nlohmann::json meta = {{"model_name", "sae"},
                               {"layer_index", 0},
                               {"component_kind", "sae_checkpoint"},
                               {"d_model", model.d_in()},
                               {"n_rows", model.n_features()},
                               {"dtype", "f64le"},
                               {"sae_config", config_json(model.config)},
                               {"segments", with_theta ? nlohmann::json{"W_enc", "b_enc", "W_dec", "b_dec", "theta"}
                                                       : nlohmann::json{"W_enc", "b_enc", "W_dec", "b_dec"}}};
  const std::string meta_text = meta.dump();
  std::string bytes(kShardMagic);
  detail::append_u32(bytes, kShardVersion);
  detail::append_u32(bytes, static_cast<std::uint32_t>(meta_text.size()));
  bytes += meta_text;
  append_segment(bytes, "W_enc", model.w_enc.data(), count(model.w_enc));
  append_segment(bytes, "b_enc", model.b_enc.data(), count(model.b_enc));
  append_segment(bytes, "W_dec", model.w_dec.data(), count(model.w_dec));
  append_segment(bytes, "b_dec", model.b_dec.data(), count(model.b_dec));
  if (with_theta) append_segment(bytes, "theta", model.theta.data(), count(model.theta));
  detail::write_file(path, bytes);
}

SaeModel read_checkpoint(const std::filesystem::path& path) {
  const std::string bytes = detail::read_file(path);
  detail::ByteReader reader(bytes);
  if (bytes.size() < kShardMagic.size() || reader.take(kShardMagic.size()) != kShardMagic) {
    throw FormatError("bad magic");
  }
  const auto version = reader.u32();
  if (version != kShardVersion) throw FormatError("unsupported version " + std::to_string(version));
  const auto meta_len = reader.u32();
  if (meta_len > reader.remaining()) throw FormatError("truncated metadata block");

  SaeModel model;
  try {
    const auto meta = nlohmann::json::parse(reader.take(meta_len));
    if (meta.at("component_kind").get<std::string>() != "sae_checkpoint") {
      throw FormatError("not an SAE checkpoint (component_kind '" +
                        meta.at("component_kind").get<std::string>() + "')");
    }
    if (meta.at("dtype").get<std::string>() != "f64le") throw FormatError("unsupported checkpoint dtype");
    model.config = config_from_json(meta.at("sae_config"));
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("bad checkpoint metadata: ") + e.what());
  }
  model.config.validate();
  const auto m = static_cast<Eigen::Index>(model.n_features());
  const auto d = static_cast<Eigen::Index>(model.d_in());
  model.w_enc.resize(m, d);
  model.b_enc.resize(m);
  model.w_dec.resize(d, m);
  model.b_dec.resize(d);
  model.theta = Vector::Zero(m);
  read_segment(reader, "W_enc", model.w_enc.data(), count(model.w_enc));
  read_segment(reader, "b_enc", model.b_enc.data(), count(model.b_enc));
  read_segment(reader, "W_dec", model.w_dec.data(), count(model.w_dec));
  read_segment(reader, "b_dec", model.b_dec.data(), count(model.b_dec));
  if (model.config.activation.uses_threshold()) {
    read_segment(reader, "theta", model.theta.data(), count(model.theta));
  }
  if (reader.remaining() != 0) throw FormatError("trailing bytes after checkpoint segments");
  model.validate();
  return model;
}

}  // namespace psae
