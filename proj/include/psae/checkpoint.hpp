#pragma once

#include <filesystem>

#include "psae/sae.hpp"

namespace psae {

// Checkpoints reuse the shard container: magic, version, JSON metadata with
// component_kind "sae_checkpoint" and the SaeConfig, then named segments
// (u32 name length, name, u64 element count, f64le values):
// W_enc (row-major M x d_in), b_enc, W_dec (row-major d_in x M), b_dec and,
// for JumpReLU kinds, theta.

void write_checkpoint(const std::filesystem::path& path, const SaeModel& model);
SaeModel read_checkpoint(const std::filesystem::path& path);

}  // namespace psae
