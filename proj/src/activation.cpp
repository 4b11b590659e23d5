#include "psae/activation.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <numeric>
#include <vector>

#include "psae/error.hpp"

namespace psae {

std::string to_string(ActivationKind kind) {
  switch (kind) {
    case ActivationKind::relu: return "relu";
    case ActivationKind::topk: return "topk";
    case ActivationKind::jumprelu: return "jumprelu";
    case ActivationKind::jumprelu_ste: return "jumprelu_ste";
  }
  return "unknown";
}

ActivationKind activation_from_string(std::string_view name) {
  if (name == "relu") return ActivationKind::relu;
  if (name == "topk") return ActivationKind::topk;
  if (name == "jumprelu") return ActivationKind::jumprelu;
  if (name == "jumprelu_ste") return ActivationKind::jumprelu_ste;
  throw ConfigError("unknown activation kind '" + std::string(name) + "'");
}

void ActivationSpec::validate(std::size_t n_features) const {
  if (kind == ActivationKind::topk && (k == 0 || k > n_features)) {
    throw ConfigError("topk needs 0 < k <= M (k=" + std::to_string(k) +
                      ", M=" + std::to_string(n_features) + ")");
  }
  if (uses_threshold() && !(theta >= 0.0 && std::isfinite(theta))) {
    throw ConfigError("jumprelu threshold must be finite and non-negative");
  }
  if (kind == ActivationKind::jumprelu_ste && !(ste_bandwidth > 0.0 && std::isfinite(ste_bandwidth))) {
    throw ConfigError("ste_bandwidth must be positive");
  }
}

std::string ActivationSpec::label() const {
  switch (kind) {
    case ActivationKind::relu: return "relu";
    case ActivationKind::topk: return "topk:" + std::to_string(k);
    default: break;
  }
  const auto shortest = [](double v) {
    char buf[64];
    auto res = std::to_chars(buf, buf + sizeof buf, v);
    return std::string(buf, res.ptr);
  };
  std::string out = to_string(kind) + ":" + shortest(theta);
  if (kind == ActivationKind::jumprelu_ste && ste_bandwidth != ActivationSpec{}.ste_bandwidth) {
    out += ":" + shortest(ste_bandwidth);
  }
  return out;
}

ActivationSpec ActivationSpec::parse_label(std::string_view label) {
  const auto colon = label.find(':');
  ActivationSpec spec;
  spec.kind = activation_from_string(label.substr(0, colon));
  if (colon == std::string_view::npos) {
    if (spec.kind == ActivationKind::topk) throw ConfigError("topk needs k, e.g. topk:384");
    return spec;
  }
  const auto arg = label.substr(colon + 1);
  if (spec.kind == ActivationKind::relu) throw ConfigError("relu takes no parameter");
  if (spec.kind == ActivationKind::topk) {
    auto res = std::from_chars(arg.data(), arg.data() + arg.size(), spec.k);
    if (res.ec != std::errc{} || res.ptr != arg.data() + arg.size()) {
      throw ConfigError("bad topk k '" + std::string(arg) + "'");
    }
  } else {
    const auto number = [](std::string_view text, const char* what) {
      try {
        std::size_t used = 0;
        const double v = std::stod(std::string(text), &used);
        if (used == text.size()) return v;
      } catch (const std::exception&) {
      }
      throw ConfigError(std::string("bad ") + what + " '" + std::string(text) + "'");
    };
    const auto second = arg.find(':');
    spec.theta = number(arg.substr(0, second), "threshold");
    if (second != std::string_view::npos) {
      if (spec.kind != ActivationKind::jumprelu_ste) throw ConfigError("only jumprelu_ste takes a bandwidth");
      spec.ste_bandwidth = number(arg.substr(second + 1), "bandwidth");
    }
  }
  return spec;
}

namespace {

void activate_row(const ActivationSpec& act, const Vector& theta, const double* pre, double* out,
                  std::size_t m, std::vector<std::size_t>& scratch) {
  switch (act.kind) {
    case ActivationKind::relu:
      for (std::size_t j = 0; j < m; ++j) out[j] = pre[j] > 0.0 ? pre[j] : 0.0;
      return;
    case ActivationKind::jumprelu:
    case ActivationKind::jumprelu_ste:
      for (std::size_t j = 0; j < m; ++j) {
        out[j] = pre[j] > theta[static_cast<Eigen::Index>(j)] ? pre[j] : 0.0;
      }
      return;
    case ActivationKind::topk: {
      scratch.clear();
      for (std::size_t j = 0; j < m; ++j) {
        out[j] = 0.0;
        if (pre[j] > 0.0) scratch.push_back(j);
      }
      if (scratch.size() > act.k) {
        const auto by_value = [pre](std::size_t a, std::size_t b) {
          return pre[a] != pre[b] ? pre[a] > pre[b] : a < b;
        };
        std::nth_element(scratch.begin(), scratch.begin() + static_cast<std::ptrdiff_t>(act.k) - 1,
                         scratch.end(), by_value);
        scratch.resize(act.k);
      }
      for (std::size_t j : scratch) out[j] = pre[j];
      return;
    }
  }
}

void check_theta(const ActivationSpec& act, const Vector& theta, std::size_t m) {
  if (act.uses_threshold() && static_cast<std::size_t>(theta.size()) != m) {
    throw DimensionError("theta has length " + std::to_string(theta.size()) + ", expected " +
                         std::to_string(m));
  }
}

}  // namespace

Vector apply_activation(const ActivationSpec& act, const Vector& theta, const Vector& preact) {
  const auto m = static_cast<std::size_t>(preact.size());
  check_theta(act, theta, m);
  Vector out(preact.size());
  std::vector<std::size_t> scratch;
  activate_row(act, theta, preact.data(), out.data(), m, scratch);
  return out;
}

Matrix apply_activation(const ActivationSpec& act, const Vector& theta, const Matrix& preact) {
  const auto m = static_cast<std::size_t>(preact.cols());
  check_theta(act, theta, m);
  Matrix out(preact.rows(), preact.cols());
  std::vector<std::size_t> scratch;
  scratch.reserve(m);
  for (Eigen::Index i = 0; i < preact.rows(); ++i) {
    activate_row(act, theta, preact.row(i).data(), out.row(i).data(), m, scratch);
  }
  return out;
}

}  // namespace psae
