#pragma once

#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include "psae/sae.hpp"
#include "psae/trainer.hpp"

namespace psae {

/// Everything needed to train one SAE. d_in is taken from the data at train time.
struct RunConfig {
  SaeConfig sae;
  TrainerConfig trainer = TrainerConfig::desk_profile();
};

/// "desk" (batch 512, 20k steps) or "full" (batch 8192, 200k steps).
RunConfig profile_config(std::string_view profile);

/// Keys: batch_size, total_steps, learning_rate, lambda, expand_ratio,
/// activation.kind, activation.k, activation.theta, activation.ste_bandwidth,
/// alpha, k_aux, dead_token_threshold, dead_step_window, seed, log_every,
/// adam_beta1, adam_beta2, adam_eps, d_in.
void set_option(RunConfig& config, std::string_view key, std::string_view value);
const std::vector<std::string>& config_keys();

/// `key = value` lines; '#' starts a comment. Later keys override earlier ones.
RunConfig parse_run_config(std::string_view text, RunConfig base = {});
RunConfig load_run_config(const std::filesystem::path& path, RunConfig base = {});

/// Round-trips through parse_run_config.
std::string format_run_config(const RunConfig& config);

}  // namespace psae
