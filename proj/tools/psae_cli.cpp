// psae: train sparse autoencoders on activation shards and score them with
// the polysemy confusion-matrix evaluation.

#include <cstdio>
#include <filesystem>
#include <iostream>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "psae/checkpoint.hpp"
#include "psae/error.hpp"
#include "psae/logit_lens.hpp"
#include "psae/ps_eval.hpp"
#include "psae/reports.hpp"
#include "psae/runner.hpp"
#include "psae/shard.hpp"
#include "psae/synthetic.hpp"

namespace fs = std::filesystem;

namespace {

// Config-file keys that can also be given as --<key> on the command line.
struct ConfigFlags {
  std::string profile = "desk";
  std::optional<fs::path> config_file;
  std::map<std::string, std::string> overrides;

  void attach(CLI::App* cmd) {
    cmd->add_option("--profile", profile, "Base settings: desk or full")
        ->check(CLI::IsMember({"desk", "full"}))
        ->capture_default_str();
    cmd->add_option("--config", config_file, "key = value training config file");
    for (const auto& key : psae::config_keys()) {
      if (key == "d_in") continue;
      cmd->add_option_function<std::string>(
          "--" + key, [this, key](const std::string& v) { overrides[key] = v; },
          "Override config key " + key);
    }
  }

  psae::RunConfig resolve() const {
    psae::RunConfig c = psae::profile_config(profile);
    if (config_file) c = psae::load_run_config(*config_file, c);
    for (const auto& [k, v] : overrides) psae::set_option(c, k, v);
    return c;
  }
};

std::vector<std::string> split_csv(const std::string& s) {
  std::vector<std::string> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ',')) {
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

void print_log_row(const psae::TrainLogRow& r) {
  std::fprintf(stderr, "step %8llu  mse %.6g  l1 %.6g  l0 %.4g  dead_1000 %zu  aux %.4g\n",
               static_cast<unsigned long long>(r.step), r.mse, r.l1, r.l0, r.dead_1000, r.aux);
}

int cmd_train(const std::vector<fs::path>& activations, const fs::path& out_dir,
              const ConfigFlags& flags, bool quiet) {
  psae::TrainRunOptions opts;
  opts.config = flags.resolve();
  opts.activations = activations;
  opts.out_dir = out_dir;
  const auto result = psae::run_train(opts, quiet ? psae::TrainCallback{} : print_log_row);
  std::printf("trained %zu features on d_in=%zu: mse %.6g  l0 %.4g  (l0/M %.4g)  dead_1000 %zu\n",
              result.train.model.n_features(), result.train.model.d_in(), result.stats.mse,
              result.stats.l0, result.stats.l0_normalized, result.train.state.dead_count_window());
  std::printf("run directory: %s\n", out_dir.string().c_str());
  return 0;
}

int cmd_eval(const psae::EvalRunOptions& opts) {
  const auto result = psae::run_eval(opts);
  const auto& m = result.metrics;
  const auto& c = m.counts;
  std::printf("pairs %zu (same %zu, different %zu)\n", result.eval_set.pairs.size(),
              result.eval_set.n_same, result.eval_set.n_different);
  std::printf("TP %g  FP %g  FN %g  TN %g  abstained %zu\n", c.tp, c.fp, c.fn, c.tn, c.abstained);
  const std::pair<const char*, psae::Metric> rows[] = {
      {"accuracy", m.accuracy},       {"recall", m.recall},     {"precision", m.precision},
      {"specificity", m.specificity}, {"sensitivity", m.sensitivity}, {"s_f1", m.s_f1},
      {"d_f1", m.d_f1},               {"average_f1", m.average_f1}};
  for (const auto& [name, value] : rows) {
    std::printf("%-12s %s\n", name, psae::format_metric(value).c_str());
  }
  std::printf("distinction mean: llm %s  sae %s\n",
              psae::format_metric(result.distinction.llm_mean).c_str(),
              psae::format_metric(result.distinction.sae_mean).c_str());
  return 0;
}

int cmd_lens(const fs::path& checkpoint, const fs::path& unembedding_path, const fs::path& vocab_path,
             const fs::path& eval_shard_path, const fs::path& eval_set_path,
             const std::vector<std::string>& pair_ids, std::size_t top_k,
             const std::optional<fs::path>& out_dir) {
  const auto model = psae::read_checkpoint(checkpoint);
  const auto unembedding = psae::read_shard(unembedding_path);
  const auto vocab = psae::read_vocab(vocab_path, unembedding.rows());
  const auto eval_shard = psae::read_shard(eval_shard_path);
  const auto eval_set = psae::read_eval_set(eval_set_path, eval_shard.rows());

  const std::set<std::string> wanted(pair_ids.begin(), pair_ids.end());
  auto report = nlohmann::ordered_json::array();
  int status = 0;
  std::size_t found = 0;
  for (const auto& pair : eval_set.pairs) {
    if (!wanted.empty() && !wanted.count(pair.pair_id)) continue;
    ++found;
    try {
      const auto result = psae::lens_pair(model, unembedding, vocab, eval_shard, pair, top_k);
      std::cout << psae::lens_table(result, pair) << '\n';
      report.push_back(psae::lens_json(result, pair));
    } catch (const psae::Error& e) {
      std::cerr << "pair " << pair.pair_id << ": " << e.what() << '\n';
      status = 1;
    }
  }
  if (found < wanted.size()) {
    std::cerr << "some requested pair ids are not in the eval set\n";
    status = 1;
  }
  if (out_dir) {
    fs::create_directories(*out_dir);
    psae::detail::write_file(*out_dir / "lens.json", report.dump(2) + "\n");
  }
  return status;
}

int cmd_inspect(const std::vector<fs::path>& paths) {
  for (const auto& p : paths) {
    std::cout << p.string() << '\n';
    try {
      const auto h = psae::read_shard_header(p);
      std::cout << "  activation shard  model=" << h.model_name << " layer=" << h.layer_index
                << " component=" << psae::to_string(h.component_kind) << " d_model=" << h.d_model
                << " n_rows=" << h.n_rows << " dtype=" << h.dtype << '\n';
      continue;
    } catch (const psae::FormatError&) {
    }
    const auto model = psae::read_checkpoint(p);
    const auto& c = model.config;
    std::cout << "  sae_checkpoint  d_in=" << c.d_in << " expand_ratio=" << c.expand_ratio
              << " features=" << c.n_features() << " lambda=" << c.lambda
              << " activation=" << c.activation.label() << " alpha=" << c.alpha
              << " k_aux=" << c.k_aux << '\n';
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Sparse autoencoder training and polysemy evaluation"};
  app.require_subcommand(1);

  // train
  auto* train = app.add_subcommand("train", "Train an SAE on activation shards");
  ConfigFlags train_flags;
  train_flags.attach(train);
  std::vector<fs::path> train_acts;
  fs::path train_out;
  bool quiet = false;
  train->add_option("--activations", train_acts, "Activation shard(s)")->required();
  train->add_option("--out-dir", train_out, "Run directory")->required();
  train->add_flag("--quiet", quiet, "No per-step log on stderr");

  // eval
  auto* eval = app.add_subcommand("eval", "Score a checkpoint on an evaluation set");
  psae::EvalRunOptions eval_opts;
  eval->add_option("--checkpoint", eval_opts.checkpoint)->required();
  eval->add_option("--eval-shard", eval_opts.eval_shard)->required();
  eval->add_option("--eval-set", eval_opts.eval_set)->required();
  eval->add_option("--out-dir", eval_opts.out_dir)->required();
  eval->add_option("--seed", eval_opts.seed, "Seed echoed into the report");

  // baseline
  auto* baseline = app.add_subcommand("baseline", "Expected metrics of a randomly activated SAE");
  std::size_t n_features = 24576, n_pairs = 1112, n_same = 556;
  bool baseline_json = false;
  baseline->add_option("--n-features,-M", n_features, "Number of SAE features")->capture_default_str();
  baseline->add_option("--n-pairs,-N", n_pairs, "Number of evaluation pairs")->capture_default_str();
  baseline->add_option("--n-same", n_same, "Pairs with the same meaning")->capture_default_str();
  baseline->add_flag("--json", baseline_json, "Print a JSON object instead of a table");

  // sweep
  auto* sweep = app.add_subcommand("sweep", "Train (and evaluate) over a grid of settings");
  ConfigFlags sweep_flags;
  sweep_flags.attach(sweep);
  std::string axis, values, seeds = "0";
  psae::SweepSpec sweep_spec;
  sweep->add_option("--axis", axis, "lambda | expand_ratio | activation | layer | component")->required();
  sweep->add_option("--values", values, "Comma-separated axis values")->required();
  sweep->add_option("--seeds", seeds, "Comma-separated seeds")->capture_default_str();
  sweep->add_option("--activations", sweep_spec.activations,
                    "Activation shard path(s); {value} expands to the axis value")->required();
  sweep->add_option("--eval-shard", sweep_spec.eval_shard);
  sweep->add_option("--eval-set", sweep_spec.eval_set);
  sweep->add_option("--out-dir", sweep_spec.root, "Sweep root directory")->required();
  sweep->add_flag("--resume", sweep_spec.resume, "Skip grid points that already finished");
  sweep->add_option("--jobs", sweep_spec.jobs, "Grid points trained in parallel")->capture_default_str();

  // lens
  auto* lens = app.add_subcommand("lens", "Logit lens of the max feature for evaluation pairs");
  fs::path lens_ckpt, lens_unembed, lens_vocab, lens_shard, lens_set;
  std::optional<fs::path> lens_out;
  std::string lens_ids;
  std::size_t top_k = 7;
  lens->add_option("--checkpoint", lens_ckpt)->required();
  lens->add_option("--unembedding", lens_unembed)->required();
  lens->add_option("--vocab", lens_vocab)->required();
  lens->add_option("--eval-shard", lens_shard)->required();
  lens->add_option("--eval-set", lens_set)->required();
  lens->add_option("--pair-ids", lens_ids, "Comma-separated pair ids (default: all)");
  lens->add_option("--top-k", top_k)->capture_default_str();
  lens->add_option("--out-dir", lens_out, "Write lens.json here");

  // inspect
  auto* inspect = app.add_subcommand("inspect", "Print shard or checkpoint headers");
  std::vector<fs::path> inspect_paths;
  inspect->add_option("paths", inspect_paths)->required();

  // synth
  auto* synth = app.add_subcommand("synth", "Write a synthetic shard with a known dictionary");
  psae::SyntheticSpec synth_spec;
  fs::path synth_out;
  std::optional<fs::path> synth_dict;
  synth->add_option("--d-in", synth_spec.d_in)->capture_default_str();
  synth->add_option("--n-true", synth_spec.n_true_features)->capture_default_str();
  synth->add_option("--avg-active", synth_spec.avg_active)->capture_default_str();
  synth->add_option("--n-samples", synth_spec.n_samples)->capture_default_str();
  synth->add_option("--seed", synth_spec.seed)->capture_default_str();
  synth->add_option("--out", synth_out, "Shard path")->required();
  synth->add_option("--dictionary-out", synth_dict, "Also write the dictionary (one atom per row)");

  CLI11_PARSE(app, argc, argv);

  try {
    if (*train) return cmd_train(train_acts, train_out, train_flags, quiet);
    if (*eval) return cmd_eval(eval_opts);
    if (*baseline) {
      const auto b = psae::random_baseline(n_features, n_pairs, n_same);
      if (baseline_json) {
        psae::ConfigEcho echo;
        auto j = psae::metrics_json(b.metrics, echo);
        j.erase("config");
        j.erase("mse");
        j.erase("l0");
        j.erase("l0_normalized");
        j.erase("dead_count");
        j.erase("l0_normalizer");
        j["p_same"] = b.p_same;
        j["p_diff"] = b.p_diff;
        std::cout << j.dump(2) << '\n';
      } else {
        std::cout << psae::baseline_table(b, n_features, n_pairs, n_same);
      }
      return 0;
    }
    if (*sweep) {
      sweep_spec.axis = psae::sweep_axis_from_string(axis);
      sweep_spec.values = split_csv(values);
      sweep_spec.seeds.clear();
      for (const auto& s : split_csv(seeds)) sweep_spec.seeds.push_back(std::stoull(s));
      sweep_spec.base = sweep_flags.resolve();
      const auto outcome = psae::run_sweep(sweep_spec, [](const std::string& msg) {
        std::cerr << msg << '\n';
      });
      std::printf("%zu runs finished, %zu failed; see %s\n", outcome.rows.size(),
                  outcome.failures.size(), (sweep_spec.root / "sweep.csv").string().c_str());
      return outcome.ok() ? 0 : 1;
    }
    if (*lens) {
      return cmd_lens(lens_ckpt, lens_unembed, lens_vocab, lens_shard, lens_set, split_csv(lens_ids),
                      top_k, lens_out);
    }
    if (*inspect) return cmd_inspect(inspect_paths);
    if (*synth) {
      const auto data = psae::generate_synthetic(synth_spec);
      psae::write_shard(synth_out, data.shard);
      if (synth_dict) {
        psae::ShardHeader h;
        h.model_name = "synthetic-dictionary";
        psae::write_shard(*synth_dict, psae::shard_from_matrix(h, data.dictionary.transpose()));
      }
      std::printf("wrote %zu x %zu shard to %s\n", data.shard.rows(), data.shard.cols(),
                  synth_out.string().c_str());
      return 0;
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 1;
}
