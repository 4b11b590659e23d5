#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "psae/types.hpp"

namespace psae {

inline constexpr std::string_view kShardMagic = "SAESHARD";
inline constexpr std::uint32_t kShardVersion = 1;
/// magic (8) + version (u32) + metadata length (u32)
inline constexpr std::size_t kFixedHeaderBytes = 16;

enum class ComponentKind { residual, mlp, attention, unembedding };

std::string to_string(ComponentKind kind);
ComponentKind component_from_string(std::string_view name);

struct ShardHeader {
  std::string model_name;
  std::int64_t layer_index = 0;
  ComponentKind component_kind = ComponentKind::residual;
  std::size_t d_model = 0;
  std::size_t n_rows = 0;
  // Only "f32le" is defined for activation shards.
  std::string dtype = "f32le";

  bool operator==(const ShardHeader&) const = default;
};

/// Dense row-major f32 matrix of activations with its provenance header.
class ActivationShard {
 public:
  ActivationShard() = default;
  /// Takes ownership of `data` (row-major, n_rows * d_model floats).
  /// Throws FormatError on a size mismatch or a non-finite entry.
  ActivationShard(ShardHeader header, std::vector<float> data);

  const ShardHeader& header() const noexcept { return header_; }
  std::size_t rows() const noexcept { return header_.n_rows; }
  std::size_t cols() const noexcept { return header_.d_model; }

  std::span<const float> row(std::size_t i) const;
  std::span<const float> data() const noexcept { return data_; }

  /// Row i widened to double.
  Vector row_vector(std::size_t i) const;
  /// Whole payload widened to double (rows x d_model).
  Matrix to_matrix() const;

  bool operator==(const ActivationShard&) const = default;

 private:
  ShardHeader header_;
  std::vector<float> data_;
};

/// Builds a shard from a double matrix, rounding to f32.
ActivationShard shard_from_matrix(ShardHeader header, const Matrix& rows);

void write_shard(const std::filesystem::path& path, const ActivationShard& shard);
ActivationShard read_shard(const std::filesystem::path& path);

/// Only the header of a shard; the payload is not read.
ShardHeader read_shard_header(const std::filesystem::path& path);

namespace detail {

// Little-endian primitives shared with the checkpoint container.
void append_u32(std::string& out, std::uint32_t v);
void append_u64(std::string& out, std::uint64_t v);
void append_f32(std::string& out, float v);
void append_f64(std::string& out, double v);

class ByteReader {
 public:
  explicit ByteReader(std::string_view bytes) : bytes_(bytes) {}
  std::uint32_t u32();
  std::uint64_t u64();
  float f32();
  double f64();
  std::string_view take(std::size_t n);
  std::size_t remaining() const noexcept { return bytes_.size() - pos_; }

 private:
  std::string_view bytes_;
  std::size_t pos_ = 0;
};

std::string read_file(const std::filesystem::path& path);
void write_file(const std::filesystem::path& path, std::string_view bytes);

}  // namespace detail

}  // namespace psae
