#include "psae/run_config.hpp"

#include <charconv>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "psae/error.hpp"

namespace psae {
namespace {

std::string_view trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

template <class Int>
Int parse_int(std::string_view key, std::string_view v) {
  Int out{};
  auto res = std::from_chars(v.data(), v.data() + v.size(), out);
  if (res.ec != std::errc{} || res.ptr != v.data() + v.size()) {
    throw ConfigError("bad integer for " + std::string(key) + ": '" + std::string(v) + "'");
  }
  return out;
}

double parse_real(std::string_view key, std::string_view v) {
  try {
    std::size_t used = 0;
    const double out = std::stod(std::string(v), &used);
    if (used == v.size()) return out;
  } catch (const std::exception&) {
  }
  throw ConfigError("bad number for " + std::string(key) + ": '" + std::string(v) + "'");
}

std::string real(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

}  // namespace

RunConfig profile_config(std::string_view profile) {
  RunConfig c;
  if (profile == "desk") {
    c.trainer = TrainerConfig::desk_profile();
  } else if (profile == "full") {
    c.trainer = TrainerConfig::full_profile();
  } else {
    throw ConfigError("unknown profile '" + std::string(profile) + "' (desk|full)");
  }
  return c;
}

const std::vector<std::string>& config_keys() {
  static const std::vector<std::string> keys = {
      "batch_size", "total_steps", "learning_rate", "lambda", "expand_ratio", "activation.kind",
      "activation.k", "activation.theta", "activation.ste_bandwidth", "alpha", "k_aux",
      "dead_token_threshold", "dead_step_window", "seed", "log_every", "adam_beta1", "adam_beta2",
      "adam_eps", "d_in"};
  return keys;
}

void set_option(RunConfig& c, std::string_view key, std::string_view value) {
  value = trim(value);
  if (key == "batch_size") c.trainer.batch_size = parse_int<std::size_t>(key, value);
  else if (key == "total_steps") c.trainer.total_steps = parse_int<std::uint64_t>(key, value);
  else if (key == "learning_rate") c.trainer.learning_rate = parse_real(key, value);
  else if (key == "lambda") c.sae.lambda = parse_real(key, value);
  else if (key == "expand_ratio") c.sae.expand_ratio = parse_int<std::size_t>(key, value);
  else if (key == "activation.kind") c.sae.activation.kind = activation_from_string(value);
  else if (key == "activation.k") c.sae.activation.k = parse_int<std::size_t>(key, value);
  else if (key == "activation.theta") c.sae.activation.theta = parse_real(key, value);
  else if (key == "activation.ste_bandwidth") c.sae.activation.ste_bandwidth = parse_real(key, value);
  else if (key == "alpha") c.sae.alpha = parse_real(key, value);
  else if (key == "k_aux") c.sae.k_aux = parse_int<std::size_t>(key, value);
  else if (key == "dead_token_threshold") c.sae.dead_token_threshold = parse_int<std::uint64_t>(key, value);
  else if (key == "dead_step_window") c.sae.dead_step_window = parse_int<std::uint64_t>(key, value);
  else if (key == "seed") c.trainer.seed = parse_int<std::uint64_t>(key, value);
  else if (key == "log_every") c.trainer.log_every = parse_int<std::uint64_t>(key, value);
  else if (key == "adam_beta1") c.trainer.adam_beta1 = parse_real(key, value);
  else if (key == "adam_beta2") c.trainer.adam_beta2 = parse_real(key, value);
  else if (key == "adam_eps") c.trainer.adam_eps = parse_real(key, value);
  else if (key == "d_in") c.sae.d_in = parse_int<std::size_t>(key, value);
  else throw ConfigError("unknown config key '" + std::string(key) + "'");
}

RunConfig parse_run_config(std::string_view text, RunConfig base) {
  std::size_t line_no = 0;
  while (!text.empty()) {
    ++line_no;
    const auto nl = text.find('\n');
    std::string_view line = text.substr(0, nl);
    text = nl == std::string_view::npos ? std::string_view{} : text.substr(nl + 1);
    if (const auto hash = line.find('#'); hash != std::string_view::npos) line = line.substr(0, hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string_view::npos) {
      throw ConfigError("config line " + std::to_string(line_no) + ": expected 'key = value'");
    }
    try {
      set_option(base, trim(line.substr(0, eq)), line.substr(eq + 1));
    } catch (const ConfigError& e) {
      throw ConfigError("config line " + std::to_string(line_no) + ": " + e.what());
    }
  }
  return base;
}

RunConfig load_run_config(const std::filesystem::path& path, RunConfig base) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_run_config(ss.str(), std::move(base));
}

std::string format_run_config(const RunConfig& c) {
  std::ostringstream out;
  out << "d_in = " << c.sae.d_in << '\n'
      << "expand_ratio = " << c.sae.expand_ratio << '\n'
      << "lambda = " << real(c.sae.lambda) << '\n'
      << "activation.kind = " << to_string(c.sae.activation.kind) << '\n'
      << "activation.k = " << c.sae.activation.k << '\n'
      << "activation.theta = " << real(c.sae.activation.theta) << '\n'
      << "activation.ste_bandwidth = " << real(c.sae.activation.ste_bandwidth) << '\n'
      << "alpha = " << real(c.sae.alpha) << '\n'
      << "k_aux = " << c.sae.k_aux << '\n'
      << "dead_token_threshold = " << c.sae.dead_token_threshold << '\n'
      << "dead_step_window = " << c.sae.dead_step_window << '\n'
      << "batch_size = " << c.trainer.batch_size << '\n'
      << "total_steps = " << c.trainer.total_steps << '\n'
      << "learning_rate = " << real(c.trainer.learning_rate) << '\n'
      << "adam_beta1 = " << real(c.trainer.adam_beta1) << '\n'
      << "adam_beta2 = " << real(c.trainer.adam_beta2) << '\n'
      << "adam_eps = " << real(c.trainer.adam_eps) << '\n'
      << "seed = " << c.trainer.seed << '\n'
      << "log_every = " << c.trainer.log_every << '\n';
  return out.str();
}

}  // namespace psae
