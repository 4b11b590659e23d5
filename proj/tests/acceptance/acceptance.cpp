// Acceptance suite: one PASS/FAIL line per criterion. Exit code 0 iff all
// selected criteria pass. `--only 2,5` restricts the run.
#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <random>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "../support/gradcheck.hpp"
#include "../support/oracles.hpp"
#include "psae/ps_eval.hpp"
#include "psae/synthetic.hpp"
#include "psae/trainer.hpp"

using namespace psae;

namespace {

struct Outcome {
  bool pass = true;
  std::string detail;
};

struct Criterion {
  int id;
  const char* name;
  double budget_s;
  std::function<Outcome()> run;
};

std::string fmt(const char* f, double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, v);
  return buf;
}

Outcome check_baseline() {
  const auto b = random_baseline(24576, 1112, 556);
  const double p_same = b.p_same;
  const double acc = *b.metrics.accuracy, prec = *b.metrics.precision, spec = *b.metrics.specificity;
  const bool ok = std::abs(p_same - 3.3115039e-9) <= 1e-9 && std::abs(acc - 0.5) <= 1e-9 &&
                  std::abs(prec - 0.5) <= 1e-9 && std::abs(spec - 0.99999999668) <= 1e-9;
  return {ok, "P_same=" + fmt("%.8g", p_same) + " acc=" + fmt("%.10g", acc) + " prec=" + fmt("%.10g", prec) +
                  " spec=" + fmt("%.12g", spec)};
}

Outcome gradient_check() {
  std::mt19937_64 rng(2024);
  Outcome out;
  std::ostringstream detail;
  for (auto kind : {ActivationKind::relu, ActivationKind::topk, ActivationKind::jumprelu,
                    ActivationKind::jumprelu_ste}) {
    double worst = 0.0;
    std::size_t checked = 0, skipped = 0;
    for (int i = 0; i < 100; ++i) {
      auto p = oracle::random_problem(rng, kind);
      const auto r = oracle::check_gradients(p.model, p.batch, p.state, 1e-4);
      worst = std::max(worst, r.max_rel_err);
      checked += r.checked;
      skipped += r.skipped;
    }
    if (!(worst < 1e-4) || checked == 0) out.pass = false;
    detail << to_string(kind) << " max_rel=" << fmt("%.2e", worst) << " (" << checked << " coords, "
           << skipped << " kink-skipped)  ";
  }
  out.detail = detail.str();
  return out;
}

Outcome metric_oracles() {
  std::mt19937_64 rng(77);
  std::normal_distribution<double> n01;
  double worst = 0.0;
  bool defined_match = true;
  for (int t = 0; t < 1000; ++t) {
    const double tp = static_cast<double>(rng() % 600), fp = static_cast<double>(rng() % 600),
                 fn = static_cast<double>(rng() % 600), tn = static_cast<double>(rng() % 600);
    const auto got = compute_metrics({tp, fp, fn, tn, 0});
    const auto want = oracle::metrics(tp, fp, fn, tn);
    const std::pair<Metric, std::optional<double>> pairs[] = {
        {got.accuracy, want.accuracy},       {got.recall, want.recall}, {got.precision, want.precision},
        {got.specificity, want.specificity}, {got.sensitivity, want.sensitivity},
        {got.s_f1, want.s_f1},               {got.d_f1, want.d_f1},     {got.average_f1, want.average_f1}};
    for (const auto& [g, w] : pairs) {
      if (g.has_value() != w.has_value()) {
        defined_match = false;
      } else if (g) {
        worst = std::max(worst, std::abs(*g - *w));
      }
    }
  }
  std::size_t mismatched_sets = 0;
  for (int t = 0; t < 200; ++t) {
    SaeConfig cfg;
    cfg.d_in = 3 + rng() % 10;
    cfg.expand_ratio = 1 + rng() % 4;
    switch (t % 3) {
      case 0: cfg.activation = ActivationSpec::relu(); break;
      case 1: cfg.activation = ActivationSpec::topk(1 + rng() % 3); break;
      default: cfg.activation = ActivationSpec::jumprelu(0.3); break;
    }
    auto s = oracle::random_model(rng, cfg);
    s.b_enc.array() -= 0.5 * std::abs(n01(rng));
    const std::size_t rows = 10 + rng() % 30;
    const Matrix x = Matrix::NullaryExpr(static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cfg.d_in),
                                         [&] { return n01(rng); });
    ShardHeader h;
    h.d_model = cfg.d_in;
    h.n_rows = rows;
    const auto shard = shard_from_matrix(h, x);
    std::vector<EvalPair> pairs;
    const std::size_t n = 1 + rng() % 80;
    for (std::size_t i = 0; i < n; ++i) {
      EvalPair p;
      p.pair_id = std::to_string(i);
      p.label = rng() % 2 ? PairLabel::same : PairLabel::different;
      p.row_index1 = rng() % rows;
      p.row_index2 = (p.row_index1 + 1 + rng() % (rows - 1)) % rows;
      pairs.push_back(p);
    }
    const auto got = evaluate_pairs(s, shard, pairs);
    const auto want = oracle::count_pairs(s, shard.to_matrix(), pairs);
    if (got.tp != want.tp || got.fp != want.fp || got.fn != want.fn || got.tn != want.tn ||
        got.abstained != want.abstained)
      ++mismatched_sets;
  }
  return {worst <= 1e-12 && defined_match && mismatched_sets == 0,
          "metrics max_abs_err=" + fmt("%.2e", worst) + (defined_match ? "" : " (undefined flags differ)") +
              ", pair-set mismatches=" + std::to_string(mismatched_sets) + "/200"};
}

Outcome topk_cardinality() {
  std::mt19937_64 rng(5);
  std::normal_distribution<double> n01;
  Outcome out;
  std::ostringstream detail;
  for (std::size_t k : {96, 192, 384}) {
    SaeConfig cfg;
    cfg.d_in = 64;
    cfg.expand_ratio = 8;  // M = 512
    cfg.activation = ActivationSpec::topk(k);
    std::size_t violations = 0, rows_total = 0, rows_saturated = 0;
    double max_mean = 0.0;
    for (int b = 0; b < 20; ++b) {
      auto s = init_model(cfg, static_cast<std::uint64_t>(b));
      // Shift the encoder bias so some batches have fewer than k positive pre-activations.
      s.b_enc.setConstant(0.4 * n01(rng));
      const Matrix batch = Matrix::NullaryExpr(256, 64, [&] { return n01(rng); });
      const Matrix pre = preactivation(s, batch);
      const Matrix f = forward(s, batch).features;
      for (Eigen::Index i = 0; i < f.rows(); ++i) {
        const auto nnz = static_cast<std::size_t>((f.row(i).array() > 0.0).count());
        const auto pos = static_cast<std::size_t>((pre.row(i).array() > 0.0).count());
        const std::size_t want = std::min(k, pos);
        if (nnz > k || nnz != want) ++violations;
        if (pos >= k) ++rows_saturated;
        ++rows_total;
      }
      const double mean = l0_count(f);
      max_mean = std::max(max_mean, mean);
      if (mean > static_cast<double>(k)) ++violations;
    }
    if (violations) out.pass = false;
    detail << "k=" << k << " max_mean_L0=" << fmt("%.1f", max_mean) << " saturated_rows=" << rows_saturated << "/"
           << rows_total << " violations=" << violations << "  ";
  }
  out.detail = detail.str();
  return out;
}

Outcome dictionary_recovery() {
  SyntheticSpec spec;
  spec.d_in = 64;
  spec.n_true_features = 256;
  spec.avg_active = 5;
  spec.n_samples = 200'000;
  spec.seed = 1;
  const auto data = generate_synthetic(spec);
  double best = 0.0;
  std::string best_lambda;
  std::ostringstream detail;
  for (double lambda : {0.01, 0.05, 0.1}) {
    SaeConfig cfg;
    cfg.d_in = 64;
    cfg.expand_ratio = 8;
    cfg.lambda = lambda;
    auto t = TrainerConfig::desk_profile();
    t.seed = 0;
    t.log_every = 1000;
    const auto r = train(init_model(cfg, 0), {data.shard}, t);
    const double mmcs = mean_max_cosine(data.dictionary, r.model.w_dec);
    detail << "lambda=" << lambda << " mmcs=" << fmt("%.4f", mmcs) << "  ";
    if (mmcs > best) best = mmcs;
  }
  detail << "best=" << fmt("%.4f", best);
  return {best > 0.9, detail.str()};
}

Outcome pareto_direction() {
  SyntheticSpec spec;
  spec.d_in = 32;
  spec.n_true_features = 128;
  spec.avg_active = 4;
  spec.n_samples = 50'000;
  spec.seed = 3;
  const auto data = generate_synthetic(spec);
  const std::vector<double> lambdas{0.01, 0.05, 0.1, 0.5};
  std::vector<double> l0(lambdas.size()), mse(lambdas.size());
  for (std::size_t i = 0; i < lambdas.size(); ++i) {
    for (std::uint64_t seed : {0, 1, 2}) {
      SaeConfig cfg;
      cfg.d_in = 32;
      cfg.expand_ratio = 4;
      cfg.lambda = lambdas[i];
      TrainerConfig t;
      t.batch_size = 256;
      t.total_steps = 5000;
      t.learning_rate = 1e-3;
      t.seed = seed;
      t.log_every = 1000;
      const auto r = train(init_model(cfg, seed), {data.shard}, t);
      const auto stats = measure_dataset(r.model, {data.shard});
      l0[i] += stats.l0 / 3.0;
      mse[i] += stats.mse / 3.0;
    }
  }
  bool ok = true;
  std::ostringstream detail;
  for (std::size_t i = 0; i < lambdas.size(); ++i) {
    detail << "lambda=" << lambdas[i] << " L0=" << fmt("%.3f", l0[i]) << " MSE=" << fmt("%.5f", mse[i]) << "  ";
    if (i > 0 && (l0[i] > l0[i - 1] || mse[i] < mse[i - 1])) ok = false;
  }
  return {ok, detail.str()};
}

Outcome constraint_and_determinism() {
  SyntheticSpec spec;
  spec.d_in = 32;
  spec.n_true_features = 96;
  spec.avg_active = 3;
  spec.n_samples = 20'000;
  spec.seed = 11;
  const auto data = generate_synthetic(spec);
  double worst = 0.0;
  std::size_t steps_seen = 0;
  bool identical = true;
  std::ostringstream detail;
  for (const auto& act : {ActivationSpec::relu(), ActivationSpec::topk(16), ActivationSpec::jumprelu(0.01),
                          ActivationSpec::jumprelu_ste(0.01, 0.005)}) {
    SaeConfig cfg;
    cfg.d_in = 32;
    cfg.expand_ratio = 4;
    cfg.activation = act;
    cfg.dead_token_threshold = 20'000;  // exercise ghost grads as well
    TrainerConfig t;
    t.batch_size = 128;
    t.total_steps = 1500;
    t.learning_rate = 1e-3;
    t.seed = 42;
    t.log_every = 50;
    const auto watch = [&](const SaeModel& m, const TrainState&) {
      ++steps_seen;
      worst = std::max(worst, (m.w_dec.colwise().norm().array() - 1.0).abs().maxCoeff());
    };
    const auto a = train(init_model(cfg, 42), {data.shard}, t, {}, watch);
    const auto b = train(init_model(cfg, 42), {data.shard}, t);
    if (a.log.to_csv() != b.log.to_csv() || a.model.w_dec != b.model.w_dec) identical = false;
  }
  detail << "max |‖col‖-1|=" << fmt("%.2e", worst) << " over " << steps_seen << " steps, logs "
         << (identical ? "byte-identical" : "DIFFER");
  return {worst < 1e-6 && identical && steps_seen == 4 * 1500, detail.str()};
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Acceptance criteria"};
  std::vector<int> only;
  app.add_option("--only", only, "Criteria to run (default: all)")->delimiter(',');
  CLI11_PARSE(app, argc, argv);

  const std::vector<Criterion> all{
      {1, "analytic random baseline", 1.0, check_baseline},
      {2, "gradients vs finite differences", 120.0, gradient_check},
      {3, "metric and counting oracles", 30.0, metric_oracles},
      {4, "topk cardinality", 10.0, topk_cardinality},
      {5, "synthetic dictionary recovery", 900.0, dictionary_recovery},
      {6, "sparsity/reconstruction trade-off in lambda", 1800.0, pareto_direction},
      {7, "decoder norm constraint and determinism", 300.0, constraint_and_determinism},
  };
  const std::set<int> selected(only.begin(), only.end());
  int failures = 0;
  for (const auto& c : all) {
    if (!selected.empty() && !selected.count(c.id)) continue;
    const auto t0 = std::chrono::steady_clock::now();
    Outcome o;
    try {
      o = c.run();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    const bool in_time = secs <= c.budget_s;
    const bool pass = o.pass && in_time;
    failures += pass ? 0 : 1;
    std::printf("criterion %d %s  %-44s %8.2fs (budget %.0fs%s)  %s\n", c.id, pass ? "PASS" : "FAIL", c.name,
                secs, c.budget_s, in_time ? "" : ", EXCEEDED", o.detail.c_str());
    std::fflush(stdout);
  }
  return failures == 0 ? 0 : 1;
}
