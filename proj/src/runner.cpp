#include "psae/runner.hpp"

#include <atomic>
#include <cstdio>
#include <fstream>
#include <map>
#include <mutex>
#include <sstream>
#include <thread>

#include "psae/checkpoint.hpp"
#include "psae/error.hpp"
#include "psae/shard.hpp"

namespace psae {

namespace fs = std::filesystem;

namespace {

void write_text(const fs::path& path, const std::string& text) { detail::write_file(path, text); }

std::vector<ActivationShard> load_shards(const std::vector<fs::path>& paths) {
  std::vector<ActivationShard> shards;
  shards.reserve(paths.size());
  for (const auto& p : paths) shards.push_back(read_shard(p));
  return shards;
}

nlohmann::ordered_json stats_json(const TrainingStats& s) {
  nlohmann::ordered_json j;
  j["mse"] = s.mse;
  j["l0"] = s.l0;
  j["l0_normalized"] = s.l0_normalized;
  j["dead_count"] = s.dead_count;
  j["l0_normalizer"] = "n_features";
  return j;
}

std::optional<TrainingStats> stats_from_json(const nlohmann::json& j) {
  if (!j.contains("mse") || j["mse"].is_null()) return std::nullopt;
  TrainingStats s;
  s.mse = j.at("mse").get<double>();
  s.l0 = j.at("l0").get<double>();
  s.l0_normalized = j.at("l0_normalized").get<double>();
  s.dead_count = j.at("dead_count").get<std::size_t>();
  return s;
}

std::string num(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.9g", v);
  return buf;
}

}  // namespace

TrainingStats TrainRunResult::training_stats() const {
  return {stats.mse, stats.l0, stats.l0_normalized, train.state.dead_count_window()};
}

TrainRunResult run_train(const TrainRunOptions& options, const TrainCallback& on_log) {
  const auto shards = load_shards(options.activations);
  if (shards.empty()) throw ConfigError("no activation shards given");
  RunConfig config = options.config;
  config.sae.d_in = shards.front().cols();
  config.sae.validate();
  config.trainer.validate();

  fs::create_directories(options.out_dir);
  write_text(options.out_dir / "config.txt", format_run_config(config));

  TrainRunResult out;
  try {
    out.train = train(init_model(config.sae, config.trainer.seed), shards, config.trainer, on_log);
  } catch (const DivergenceError& e) {
    write_checkpoint(options.out_dir / "checkpoint.sae", e.last_good());
    throw;
  }
  out.stats = measure_dataset(out.train.model, shards, options.measure_rows);

  write_checkpoint(options.out_dir / "checkpoint.sae", out.train.model);
  write_text(options.out_dir / "train_log.csv", out.train.log.to_csv());
  write_text(options.out_dir / "metrics.json", stats_json(out.training_stats()).dump(2) + "\n");
  return out;
}

EvalRunResult run_eval(const EvalRunOptions& options) {
  const SaeModel model = read_checkpoint(options.checkpoint);
  const ActivationShard shard = read_shard(options.eval_shard);
  EvalRunResult out;
  out.eval_set = read_eval_set(options.eval_set, shard.rows());

  std::optional<TrainingStats> training = options.training;
  const auto run_dir = options.checkpoint.parent_path();
  if (!training && fs::exists(run_dir / "metrics.json")) {
    try {
      training = stats_from_json(nlohmann::json::parse(detail::read_file(run_dir / "metrics.json")));
    } catch (const nlohmann::json::exception&) {
      training.reset();
    }
  }
  std::optional<std::uint64_t> seed = options.seed;
  if (!seed && fs::exists(run_dir / "config.txt")) {
    seed = load_run_config(run_dir / "config.txt").trainer.seed;
  }

  const auto counts = evaluate_pairs(model, shard, out.eval_set.pairs);
  out.metrics = compute_metrics(counts, training);
  out.distinction = polysemous_distinction(model, shard, out.eval_set.pairs);

  ConfigEcho echo;
  echo.lambda = model.config.lambda;
  echo.expand_ratio = model.config.expand_ratio;
  echo.activation = model.config.activation.label();
  echo.layer = shard.header().layer_index;
  echo.component = to_string(shard.header().component_kind);
  echo.seed = seed;

  fs::create_directories(options.out_dir);
  auto j = metrics_json(out.metrics, echo);
  j["n_pairs"] = out.eval_set.pairs.size();
  j["n_same"] = out.eval_set.n_same;
  j["n_different"] = out.eval_set.n_different;
  j["distinction_llm_mean"] = out.distinction.llm_mean ? nlohmann::ordered_json(*out.distinction.llm_mean)
                                                       : nlohmann::ordered_json(nullptr);
  j["distinction_sae_mean"] = out.distinction.sae_mean ? nlohmann::ordered_json(*out.distinction.sae_mean)
                                                       : nlohmann::ordered_json(nullptr);
  write_text(options.out_dir / "metrics.json", j.dump(2) + "\n");
  write_text(options.out_dir / "distinction.csv", distinction_csv(out.distinction));
  write_text(options.out_dir / "distinction_hist.csv",
             histogram_csv(distinction_histogram(out.distinction)));
  return out;
}

std::string to_string(SweepAxis axis) {
  switch (axis) {
    case SweepAxis::lambda: return "lambda";
    case SweepAxis::expand_ratio: return "expand_ratio";
    case SweepAxis::activation: return "activation";
    case SweepAxis::layer: return "layer";
    case SweepAxis::component: return "component";
  }
  return "unknown";
}

SweepAxis sweep_axis_from_string(std::string_view name) {
  if (name == "lambda") return SweepAxis::lambda;
  if (name == "expand_ratio") return SweepAxis::expand_ratio;
  if (name == "activation") return SweepAxis::activation;
  if (name == "layer") return SweepAxis::layer;
  if (name == "component") return SweepAxis::component;
  throw ConfigError("unknown sweep axis '" + std::string(name) + "'");
}

void SweepSpec::validate() const {
  if (values.empty()) throw ConfigError("sweep needs at least one value");
  if (seeds.empty()) throw ConfigError("sweep needs at least one seed");
  if (activations.empty()) throw ConfigError("sweep needs activation shards");
  if (eval_shard.has_value() != eval_set.has_value()) {
    throw ConfigError("eval shard and eval set must be given together");
  }
  if (jobs == 0) throw ConfigError("jobs must be positive");
}

namespace {

std::string substitute(std::string text, const std::string& value) {
  const std::string key = "{value}";
  for (auto pos = text.find(key); pos != std::string::npos; pos = text.find(key, pos + value.size())) {
    text.replace(pos, key.size(), value);
  }
  return text;
}

std::string dir_safe(std::string s) {
  for (char& c : s) {
    if (c == '/' || c == ':' || c == ' ' || c == '\\') c = '-';
  }
  return s;
}

RunConfig point_config(const SweepSpec& spec, const std::string& value, std::uint64_t seed) {
  RunConfig c = spec.base;
  switch (spec.axis) {
    case SweepAxis::lambda: set_option(c, "lambda", value); break;
    case SweepAxis::expand_ratio: set_option(c, "expand_ratio", value); break;
    case SweepAxis::activation: c.sae.activation = ActivationSpec::parse_label(value); break;
    case SweepAxis::layer:
    case SweepAxis::component: break;  // selects data, not hyper-parameters
  }
  c.trainer.seed = seed;
  return c;
}

nlohmann::json row_json(const SweepRow& r) {
  nlohmann::json j;
  j["value"] = r.value;
  j["seed"] = r.seed;
  j["n_rows"] = r.stats.n_rows;
  j["mse"] = r.stats.mse;
  j["l1"] = r.stats.l1;
  j["l0"] = r.stats.l0;
  j["l0_normalized"] = r.stats.l0_normalized;
  j["dead_1000"] = r.dead_1000;
  if (r.metrics) {
    const auto& c = r.metrics->counts;
    j["counts"] = {c.tp, c.fp, c.fn, c.tn};
    j["abstained"] = c.abstained;
  }
  return j;
}

SweepRow row_from_json(const nlohmann::json& j) {
  SweepRow r;
  r.value = j.at("value").get<std::string>();
  r.seed = j.at("seed").get<std::uint64_t>();
  r.stats.n_rows = j.at("n_rows").get<std::size_t>();
  r.stats.mse = j.at("mse").get<double>();
  r.stats.l1 = j.at("l1").get<double>();
  r.stats.l0 = j.at("l0").get<double>();
  r.stats.l0_normalized = j.at("l0_normalized").get<double>();
  r.dead_1000 = j.at("dead_1000").get<std::size_t>();
  if (j.contains("counts")) {
    ConfusionCounts c;
    const auto& v = j.at("counts");
    c.tp = v.at(0).get<double>();
    c.fp = v.at(1).get<double>();
    c.fn = v.at(2).get<double>();
    c.tn = v.at(3).get<double>();
    c.abstained = j.at("abstained").get<std::size_t>();
    r.metrics = compute_metrics(c, TrainingStats{r.stats.mse, r.stats.l0, r.stats.l0_normalized, r.dead_1000});
  }
  return r;
}

SweepRow run_point(const SweepSpec& spec, const std::string& value, std::uint64_t seed) {
  const auto dir = sweep_run_dir(spec, value, seed);
  const auto done_marker = dir / "done";
  if (spec.resume && fs::exists(done_marker)) {
    return row_from_json(nlohmann::json::parse(detail::read_file(dir / "row.json")));
  }
  fs::remove(done_marker);

  TrainRunOptions train_opts;
  train_opts.config = point_config(spec, value, seed);
  for (const auto& a : spec.activations) train_opts.activations.emplace_back(substitute(a, value));
  train_opts.out_dir = dir;
  train_opts.measure_rows = spec.measure_rows;
  const auto trained = run_train(train_opts);

  SweepRow row;
  row.value = value;
  row.seed = seed;
  row.stats = trained.stats;
  row.dead_1000 = trained.train.state.dead_count_window();
  if (spec.eval_shard) {
    EvalRunOptions eval_opts;
    eval_opts.checkpoint = dir / "checkpoint.sae";
    eval_opts.eval_shard = substitute(*spec.eval_shard, value);
    eval_opts.eval_set = *spec.eval_set;
    eval_opts.out_dir = dir;
    eval_opts.seed = seed;
    eval_opts.training = trained.training_stats();
    row.metrics = run_eval(eval_opts).metrics;
  }
  write_text(dir / "row.json", row_json(row).dump() + "\n");
  write_text(done_marker, "");
  return row;
}

const char* const kMetricColumns =
    "tp,fp,fn,tn,abstained,accuracy,recall,precision,specificity,sensitivity,s_f1,d_f1,average_f1";

std::vector<Metric> metric_list(const MetricsReport& m) {
  return {m.accuracy, m.recall, m.precision, m.specificity, m.sensitivity, m.s_f1, m.d_f1, m.average_f1};
}

}  // namespace

fs::path sweep_run_dir(const SweepSpec& spec, const std::string& value, std::uint64_t seed) {
  return spec.root / (to_string(spec.axis) + "_" + dir_safe(value)) / ("seed_" + std::to_string(seed));
}

SweepOutcome run_sweep(const SweepSpec& spec, const std::function<void(const std::string&)>& progress) {
  spec.validate();
  fs::create_directories(spec.root);

  struct Point {
    std::string value;
    std::uint64_t seed;
  };
  std::vector<Point> grid;
  for (const auto& v : spec.values) {
    for (auto s : spec.seeds) grid.push_back({v, s});
  }
  std::vector<std::optional<SweepRow>> rows(grid.size());
  std::vector<std::optional<std::string>> errors(grid.size());

  std::atomic<std::size_t> next{0};
  std::mutex progress_mutex;
  const auto worker = [&] {
    for (std::size_t i = next++; i < grid.size(); i = next++) {
      const auto& p = grid[i];
      const std::string tag = to_string(spec.axis) + "=" + p.value + " seed=" + std::to_string(p.seed);
      try {
        rows[i] = run_point(spec, p.value, p.seed);
        if (progress) {
          std::lock_guard lock(progress_mutex);
          progress(tag + " done: mse=" + num(rows[i]->stats.mse) + " l0=" + num(rows[i]->stats.l0));
        }
      } catch (const std::exception& e) {
        errors[i] = e.what();
        if (progress) {
          std::lock_guard lock(progress_mutex);
          progress(tag + " failed: " + e.what());
        }
      }
    }
  };
  const std::size_t n_threads = std::min(spec.jobs, grid.size());
  std::vector<std::thread> threads;
  for (std::size_t t = 1; t < n_threads; ++t) threads.emplace_back(worker);
  worker();
  for (auto& t : threads) t.join();

  SweepOutcome outcome;
  for (std::size_t i = 0; i < grid.size(); ++i) {
    if (rows[i]) outcome.rows.push_back(std::move(*rows[i]));
    if (errors[i]) outcome.failures.push_back({grid[i].value, grid[i].seed, *errors[i]});
  }

  const std::string axis = to_string(spec.axis);
  std::ostringstream csv;
  csv << "axis,value,seed,mse,l0,l0_normalized,dead_1000," << kMetricColumns << '\n';
  for (const auto& r : outcome.rows) {
    csv << axis << ',' << r.value << ',' << r.seed << ',' << num(r.stats.mse) << ',' << num(r.stats.l0)
        << ',' << num(r.stats.l0_normalized) << ',' << r.dead_1000;
    if (r.metrics) {
      const auto& c = r.metrics->counts;
      csv << ',' << num(c.tp) << ',' << num(c.fp) << ',' << num(c.fn) << ',' << num(c.tn) << ','
          << c.abstained;
      for (const auto& m : metric_list(*r.metrics)) csv << ',' << format_metric(m);
    } else {
      for (int k = 0; k < 13; ++k) csv << ",n/a";
    }
    csv << '\n';
  }
  write_text(spec.root / "sweep.csv", csv.str());

  // Mean over seeds per axis value; metrics average their defined values.
  std::ostringstream mean_csv;
  mean_csv << "axis,value,n_runs,mse,l0,l0_normalized,dead_1000,accuracy,recall,precision,specificity,"
              "sensitivity,s_f1,d_f1,average_f1\n";
  for (const auto& value : spec.values) {
    double mse = 0, l0 = 0, l0n = 0, dead = 0;
    std::vector<double> sums(8, 0.0);
    std::vector<std::size_t> defined(8, 0);
    std::size_t n = 0;
    for (const auto& r : outcome.rows) {
      if (r.value != value) continue;
      ++n;
      mse += r.stats.mse;
      l0 += r.stats.l0;
      l0n += r.stats.l0_normalized;
      dead += static_cast<double>(r.dead_1000);
      if (r.metrics) {
        const auto ms = metric_list(*r.metrics);
        for (std::size_t k = 0; k < ms.size(); ++k) {
          if (ms[k]) {
            sums[k] += *ms[k];
            ++defined[k];
          }
        }
      }
    }
    if (n == 0) continue;
    const auto dn = static_cast<double>(n);
    mean_csv << axis << ',' << value << ',' << n << ',' << num(mse / dn) << ',' << num(l0 / dn) << ','
             << num(l0n / dn) << ',' << num(dead / dn);
    for (std::size_t k = 0; k < sums.size(); ++k) {
      mean_csv << ',' << (defined[k] ? num(sums[k] / static_cast<double>(defined[k])) : "n/a");
    }
    mean_csv << '\n';
  }
  write_text(spec.root / "sweep_mean.csv", mean_csv.str());

  std::ostringstream failures;
  for (const auto& f : outcome.failures) {
    failures << axis << '=' << f.value << " seed=" << f.seed << ": " << f.message << '\n';
  }
  write_text(spec.root / "failures.txt", failures.str());
  return outcome;
}

}  // namespace psae
