#include "psae/shard.hpp"

#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <iterator>

#include <nlohmann/json.hpp>

#include "psae/error.hpp"

namespace psae {

static_assert(std::endian::native == std::endian::little || std::endian::native == std::endian::big);

namespace detail {
namespace {

template <class T>
T byteswap_if_big(T v) {
  if constexpr (std::endian::native == std::endian::big) {
    unsigned char b[sizeof(T)];
    std::memcpy(b, &v, sizeof(T));
    for (std::size_t i = 0; i < sizeof(T) / 2; ++i) std::swap(b[i], b[sizeof(T) - 1 - i]);
    std::memcpy(&v, b, sizeof(T));
  }
  return v;
}

template <class T>
void append_raw(std::string& out, T v) {
  v = byteswap_if_big(v);
  char b[sizeof(T)];
  std::memcpy(b, &v, sizeof(T));
  out.append(b, sizeof(T));
}

}  // namespace

void append_u32(std::string& out, std::uint32_t v) { append_raw(out, v); }
void append_u64(std::string& out, std::uint64_t v) { append_raw(out, v); }
void append_f32(std::string& out, float v) { append_raw(out, std::bit_cast<std::uint32_t>(v)); }
void append_f64(std::string& out, double v) { append_raw(out, std::bit_cast<std::uint64_t>(v)); }

std::string_view ByteReader::take(std::size_t n) {
  if (n > remaining()) throw FormatError("unexpected end of data");
  auto s = bytes_.substr(pos_, n);
  pos_ += n;
  return s;
}

std::uint32_t ByteReader::u32() {
  std::uint32_t v;
  std::memcpy(&v, take(sizeof v).data(), sizeof v);
  return byteswap_if_big(v);
}

std::uint64_t ByteReader::u64() {
  std::uint64_t v;
  std::memcpy(&v, take(sizeof v).data(), sizeof v);
  return byteswap_if_big(v);
}

float ByteReader::f32() { return std::bit_cast<float>(u32()); }
double ByteReader::f64() { return std::bit_cast<double>(u64()); }

std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open " + path.string());
  std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  if (in.bad()) throw Error("read failed: " + path.string());
  return bytes;
}

void write_file(const std::filesystem::path& path, std::string_view bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error("cannot open for writing: " + path.string());
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  out.flush();
  if (!out) throw Error("write failed: " + path.string());
}

}  // namespace detail

std::string to_string(ComponentKind kind) {
  switch (kind) {
    case ComponentKind::residual: return "residual";
    case ComponentKind::mlp: return "mlp";
    case ComponentKind::attention: return "attention";
    case ComponentKind::unembedding: return "unembedding";
  }
  return "unknown";
}

ComponentKind component_from_string(std::string_view name) {
  if (name == "residual") return ComponentKind::residual;
  if (name == "mlp") return ComponentKind::mlp;
  if (name == "attention") return ComponentKind::attention;
  if (name == "unembedding") return ComponentKind::unembedding;
  throw FormatError("unknown component_kind '" + std::string(name) + "'");
}

ActivationShard::ActivationShard(ShardHeader header, std::vector<float> data)
    : header_(std::move(header)), data_(std::move(data)) {
  if (header_.d_model == 0) throw FormatError("d_model must be positive");
  if (header_.dtype != "f32le") throw FormatError("unsupported dtype '" + header_.dtype + "'");
  if (data_.size() != header_.n_rows * header_.d_model) {
    throw FormatError("payload has " + std::to_string(data_.size()) + " values, header declares " +
                      std::to_string(header_.n_rows) + " x " + std::to_string(header_.d_model));
  }
  for (std::size_t i = 0; i < data_.size(); ++i) {
    if (!std::isfinite(data_[i])) {
      throw FormatError("non-finite value at row " + std::to_string(i / header_.d_model) +
                        ", column " + std::to_string(i % header_.d_model));
    }
  }
}

std::span<const float> ActivationShard::row(std::size_t i) const {
  if (i >= rows()) {
    throw DimensionError("row " + std::to_string(i) + " out of range (" + std::to_string(rows()) +
                         " rows)");
  }
  return std::span<const float>(data_).subspan(i * cols(), cols());
}

Vector ActivationShard::row_vector(std::size_t i) const {
  auto r = row(i);
  Vector v(static_cast<Eigen::Index>(r.size()));
  for (std::size_t j = 0; j < r.size(); ++j) v[static_cast<Eigen::Index>(j)] = r[j];
  return v;
}

Matrix ActivationShard::to_matrix() const {
  Eigen::Map<const Eigen::Matrix<float, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>> m(
      data_.data(), static_cast<Eigen::Index>(rows()), static_cast<Eigen::Index>(cols()));
  return m.cast<double>();
}

ActivationShard shard_from_matrix(ShardHeader header, const Matrix& rows) {
  header.n_rows = static_cast<std::size_t>(rows.rows());
  header.d_model = static_cast<std::size_t>(rows.cols());
  std::vector<float> data(static_cast<std::size_t>(rows.size()));
  for (Eigen::Index i = 0; i < rows.rows(); ++i) {
    for (Eigen::Index j = 0; j < rows.cols(); ++j) {
      data[static_cast<std::size_t>(i * rows.cols() + j)] = static_cast<float>(rows(i, j));
    }
  }
  return ActivationShard(std::move(header), std::move(data));
}

namespace {

nlohmann::json header_json(const ShardHeader& h) {
  return {{"model_name", h.model_name},
          {"layer_index", h.layer_index},
          {"component_kind", to_string(h.component_kind)},
          {"d_model", h.d_model},
          {"n_rows", h.n_rows},
          {"dtype", h.dtype}};
}

struct ParsedPrefix {
  ShardHeader header;
  std::size_t payload_offset = 0;
};

ParsedPrefix parse_prefix(std::string_view bytes) {
  detail::ByteReader reader(bytes);
  if (bytes.size() < kShardMagic.size() || reader.take(kShardMagic.size()) != kShardMagic) {
    throw FormatError("bad magic");
  }
  if (reader.remaining() < 8) throw FormatError("truncated header");
  const auto version = reader.u32();
  if (version != kShardVersion) {
    throw FormatError("unsupported version " + std::to_string(version));
  }
  const auto meta_len = reader.u32();
  if (meta_len > reader.remaining()) throw FormatError("truncated metadata block");
  auto meta_text = reader.take(meta_len);

  nlohmann::json meta;
  try {
    meta = nlohmann::json::parse(meta_text);
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("metadata is not valid JSON: ") + e.what());
  }
  ParsedPrefix out;
  try {
    out.header.model_name = meta.at("model_name").get<std::string>();
    out.header.layer_index = meta.at("layer_index").get<std::int64_t>();
    out.header.component_kind = component_from_string(meta.at("component_kind").get<std::string>());
    const auto d_model = meta.at("d_model").get<std::int64_t>();
    const auto n_rows = meta.at("n_rows").get<std::int64_t>();
    if (d_model <= 0) throw FormatError("d_model must be positive");
    if (n_rows < 0) throw FormatError("n_rows must be non-negative");
    if (out.header.layer_index < 0) throw FormatError("layer_index must be non-negative");
    out.header.d_model = static_cast<std::size_t>(d_model);
    out.header.n_rows = static_cast<std::size_t>(n_rows);
    out.header.dtype = meta.at("dtype").get<std::string>();
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("bad shard metadata: ") + e.what());
  }
  if (out.header.dtype != "f32le") {
    throw FormatError("unsupported dtype '" + out.header.dtype + "'");
  }
  out.payload_offset = kFixedHeaderBytes + meta_len;
  return out;
}

}  // namespace

void write_shard(const std::filesystem::path& path, const ActivationShard& shard) {
  // Invariants (finite, sized) are established by the ActivationShard constructor.
  const std::string meta = header_json(shard.header()).dump();
  std::string bytes;
  bytes.reserve(kFixedHeaderBytes + meta.size() + shard.data().size() * 4);
  bytes.append(kShardMagic);
  detail::append_u32(bytes, kShardVersion);
  detail::append_u32(bytes, static_cast<std::uint32_t>(meta.size()));
  bytes.append(meta);
  if constexpr (std::endian::native == std::endian::little) {
    bytes.append(reinterpret_cast<const char*>(shard.data().data()), shard.data().size() * 4);
  } else {
    for (float v : shard.data()) detail::append_f32(bytes, v);
  }
  detail::write_file(path, bytes);
}

ActivationShard read_shard(const std::filesystem::path& path) {
  const std::string bytes = detail::read_file(path);
  auto prefix = parse_prefix(bytes);
  const auto& h = prefix.header;
  const std::size_t remaining = bytes.size() - prefix.payload_offset;
  const std::size_t expected = h.n_rows * h.d_model * 4;
  if (expected > remaining) {
    throw FormatError("truncated payload: expected " + std::to_string(expected) + " bytes, found " +
                      std::to_string(remaining));
  }
  if (expected < remaining) {
    throw FormatError(std::to_string(remaining - expected) + " trailing bytes after payload");
  }
  std::vector<float> data(h.n_rows * h.d_model);
  detail::ByteReader reader(std::string_view(bytes).substr(prefix.payload_offset));
  for (auto& v : data) v = reader.f32();
  return ActivationShard(h, std::move(data));
}

ShardHeader read_shard_header(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open " + path.string());
  std::string prefix(kFixedHeaderBytes, '\0');
  in.read(prefix.data(), static_cast<std::streamsize>(prefix.size()));
  prefix.resize(static_cast<std::size_t>(in.gcount()));
  if (prefix.size() == kFixedHeaderBytes) {
    detail::ByteReader reader(std::string_view(prefix).substr(12));
    std::string meta(reader.u32(), '\0');
    in.read(meta.data(), static_cast<std::streamsize>(meta.size()));
    meta.resize(static_cast<std::size_t>(in.gcount()));
    prefix += meta;
  }
  return parse_prefix(prefix).header;
}

}  // namespace psae
