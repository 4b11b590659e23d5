#include "psae/reports.hpp"

#include <algorithm>
#include <cstdio>
#include <sstream>

namespace psae {
namespace {

nlohmann::ordered_json metric_value(const Metric& m) {
  return m ? nlohmann::ordered_json(*m) : nlohmann::ordered_json(nullptr);
}

std::string num(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.12g", v);
  return buf;
}

}  // namespace

std::string format_metric(const Metric& m) { return m ? num(*m) : "n/a"; }

nlohmann::ordered_json metrics_json(const MetricsReport& r, const ConfigEcho& echo) {
  nlohmann::ordered_json j;
  j["tp"] = r.counts.tp;
  j["fp"] = r.counts.fp;
  j["fn"] = r.counts.fn;
  j["tn"] = r.counts.tn;
  j["abstained"] = r.counts.abstained;
  j["accuracy"] = metric_value(r.accuracy);
  j["recall"] = metric_value(r.recall);
  j["precision"] = metric_value(r.precision);
  j["specificity"] = metric_value(r.specificity);
  j["sensitivity"] = metric_value(r.sensitivity);
  j["s_f1"] = metric_value(r.s_f1);
  j["d_f1"] = metric_value(r.d_f1);
  j["average_f1"] = metric_value(r.average_f1);
  if (r.training) {
    j["mse"] = r.training->mse;
    j["l0"] = r.training->l0;
    j["l0_normalized"] = r.training->l0_normalized;
    j["dead_count"] = r.training->dead_count;
  } else {
    j["mse"] = nullptr;
    j["l0"] = nullptr;
    j["l0_normalized"] = nullptr;
    j["dead_count"] = nullptr;
  }
  j["l0_normalizer"] = "n_features";
  nlohmann::ordered_json cfg;
  cfg["lambda"] = echo.lambda;
  cfg["expand_ratio"] = echo.expand_ratio;
  cfg["activation"] = echo.activation;
  cfg["layer"] = echo.layer ? nlohmann::ordered_json(*echo.layer) : nlohmann::ordered_json(nullptr);
  cfg["component"] =
      echo.component ? nlohmann::ordered_json(*echo.component) : nlohmann::ordered_json(nullptr);
  cfg["seed"] = echo.seed ? nlohmann::ordered_json(*echo.seed) : nlohmann::ordered_json(nullptr);
  j["config"] = cfg;
  return j;
}

std::string distinction_csv(const DistinctionReport& report) {
  std::string out = "pair_id,llm_distance,sae_distance\n";
  for (const auto& e : report.entries) {
    out += e.pair_id + ',' + format_metric(e.llm_distance) + ',' + format_metric(e.sae_distance) + '\n';
  }
  return out;
}

std::string histogram_csv(const std::vector<HistogramBin>& bins) {
  std::string out = "bin_lo,bin_hi,llm_count,sae_count\n";
  for (const auto& b : bins) {
    out += num(b.lo) + ',' + num(b.hi) + ',' + std::to_string(b.llm_count) + ',' +
           std::to_string(b.sae_count) + '\n';
  }
  return out;
}

std::string baseline_table(const BaselineResult& b, std::size_t n_features, std::size_t n_pairs,
                           std::size_t n_same) {
  const auto& m = b.metrics;
  std::ostringstream out;
  char buf[128];
  const auto line = [&](const char* name, const std::string& value) {
    std::snprintf(buf, sizeof buf, "%-14s %s\n", name, value.c_str());
    out << buf;
  };
  out << "random SAE baseline: M=" << n_features << " N=" << n_pairs << " n_same=" << n_same << '\n';
  line("P_same", num(b.p_same));
  line("P_diff", num(b.p_diff));
  line("TP", num(b.counts.tp));
  line("FN", num(b.counts.fn));
  line("FP", num(b.counts.fp));
  line("TN", num(b.counts.tn));
  line("Accuracy", format_metric(m.accuracy));
  line("Precision", format_metric(m.precision));
  line("Recall", format_metric(m.recall));
  line("Specificity", format_metric(m.specificity));
  line("Sensitivity", format_metric(m.sensitivity));
  line("S-F1", format_metric(m.s_f1));
  line("D-F1", format_metric(m.d_f1));
  line("Average-F1", format_metric(m.average_f1));
  return out.str();
}

namespace {

nlohmann::ordered_json lens_result_json(const LensResult& r) {
  nlohmann::ordered_json j;
  j["context_index"] = r.context_index;
  j["feature_index"] = r.feature_index;
  j["feature_value"] = r.feature_value;
  auto entries = nlohmann::ordered_json::array();
  for (const auto& e : r.entries) {
    entries.push_back({{"token_id", e.token_id}, {"token_string", e.token}, {"logit", e.logit}});
  }
  j["entries"] = std::move(entries);
  return j;
}

}  // namespace

nlohmann::ordered_json lens_json(const LensPair& lens, const EvalPair& pair) {
  nlohmann::ordered_json j;
  j["pair_id"] = pair.pair_id;
  j["target_word"] = pair.target_word;
  j["label"] = static_cast<int>(pair.label);
  j["feature_differs"] = lens.feature_differs();
  j["context1"] = lens_result_json(lens.context1);
  j["context2"] = lens_result_json(lens.context2);
  return j;
}

std::string lens_table(const LensPair& lens, const EvalPair& pair) {
  std::ostringstream out;
  char buf[256];
  out << "pair " << pair.pair_id << "  target '" << pair.target_word << "'  ("
      << (lens.feature_differs() ? "different" : "same") << " max feature)\n";
  out << "  context 1: " << pair.context1_text << '\n';
  out << "  context 2: " << pair.context2_text << '\n';
  std::snprintf(buf, sizeof buf, "  %-32s %-32s\n",
                ("feature " + std::to_string(lens.context1.feature_index)).c_str(),
                ("feature " + std::to_string(lens.context2.feature_index)).c_str());
  out << buf;
  const auto cell = [](const LensResult& r, std::size_t i) -> std::string {
    if (i >= r.entries.size()) return "";
    char c[128];
    std::snprintf(c, sizeof c, "%-20s %10.4f", r.entries[i].token.c_str(), r.entries[i].logit);
    return c;
  };
  const auto rows = std::max(lens.context1.entries.size(), lens.context2.entries.size());
  for (std::size_t i = 0; i < rows; ++i) {
    std::snprintf(buf, sizeof buf, "  %-32s %-32s\n", cell(lens.context1, i).c_str(),
                  cell(lens.context2, i).c_str());
    out << buf;
  }
  return out.str();
}

}  // namespace psae
