#include <doctest.h>

#include <random>

#include "../support/gradcheck.hpp"
#include "../support/oracles.hpp"
#include "psae/synthetic.hpp"
#include "psae/trainer.hpp"

using namespace psae;

namespace {

SaeConfig config(std::size_t d, std::size_t r, double lambda = 0.05) {
  SaeConfig c;
  c.d_in = d;
  c.expand_ratio = r;
  c.lambda = lambda;
  return c;
}

std::vector<std::size_t> dead_list(const TrainState& s) {
  std::vector<std::size_t> out;
  for (std::size_t j = 0; j < s.dead_mask.size(); ++j)
    if (s.dead_mask[j]) out.push_back(j);
  return out;
}

SyntheticData toy_data(std::uint64_t seed, std::size_t n = 4000) {
  SyntheticSpec spec;
  spec.d_in = 8;
  spec.n_true_features = 24;
  spec.avg_active = 2;
  spec.n_samples = n;
  spec.seed = seed;
  return generate_synthetic(spec);
}

TrainerConfig quick(std::uint64_t steps, std::uint64_t seed = 0) {
  TrainerConfig t;
  t.batch_size = 64;
  t.total_steps = steps;
  t.learning_rate = 1e-3;
  t.seed = seed;
  t.log_every = 10;
  return t;
}

}  // namespace

TEST_CASE("loss examples") {
  auto s = init_model(config(2, 1), 0);
  SUBCASE("perfect reconstruction with f = 0") {
    s.w_enc.setZero();
    s.b_dec = Vector::Constant(2, 0.7);
    const Matrix x = Matrix::Constant(3, 2, 0.7);
    const auto l = compute_loss(s, x, TrainState::fresh(s));
    CHECK(l.total == 0.0);
  }
  SUBCASE("hand arithmetic") {
    s.w_enc << 0.5, 0.0, 0.0, 0.0;
    s.w_dec.setZero();
    Matrix x(1, 2);
    x << 1.0, 0.0;
    const auto l = compute_loss(s, x, TrainState::fresh(s));
    CHECK(l.recon == doctest::Approx(1.0).epsilon(1e-15));
    CHECK(l.sparse == doctest::Approx(0.5).epsilon(1e-15));
    CHECK(l.aux == 0.0);
    CHECK(l.total == doctest::Approx(1.025).epsilon(1e-15));
  }
}

TEST_CASE("loss matches the term-wise oracle") {
  std::mt19937_64 rng(31);
  for (int trial = 0; trial < 60; ++trial) {
    const auto kind = static_cast<ActivationKind>(trial % 4);
    auto p = oracle::random_problem(rng, kind);
    const auto got = compute_loss(p.model, p.batch, p.state);
    const auto want = oracle::loss(p.model, p.batch, dead_list(p.state));
    CHECK(got.recon == doctest::Approx(want.recon).epsilon(1e-9));
    CHECK(got.sparse == doctest::Approx(want.sparse).epsilon(1e-9));
    CHECK(got.aux == doctest::Approx(want.aux).epsilon(1e-9));
    CHECK(got.total == doctest::Approx(want.total).epsilon(1e-9));
    const double parts = got.recon + p.model.config.lambda * got.sparse + p.model.config.alpha * got.aux;
    CHECK(got.total == doctest::Approx(parts).epsilon(1e-9));
  }
}

TEST_CASE("gradients match finite differences for every activation kind") {
  std::mt19937_64 rng(41);
  for (auto kind : {ActivationKind::relu, ActivationKind::topk, ActivationKind::jumprelu,
                    ActivationKind::jumprelu_ste}) {
    CAPTURE(to_string(kind));
    std::size_t checked = 0, skipped = 0;
    for (int trial = 0; trial < 12; ++trial) {
      auto p = oracle::random_problem(rng, kind);
      const auto r = oracle::check_gradients(p.model, p.batch, p.state);
      CAPTURE(r.worst);
      CHECK(r.max_rel_err < 1e-4);
      checked += r.checked;
      skipped += r.skipped;
    }
    CHECK(skipped * 20 < checked);
  }
}

TEST_CASE("decoder gradient projection removes the component along each column") {
  std::mt19937_64 rng(43);
  auto p = oracle::random_problem(rng, ActivationKind::relu);
  GradientOptions raw;
  raw.project_decoder = false;
  const auto g0 = compute_gradients(p.model, p.batch, p.state, raw);
  const auto g1 = compute_gradients(p.model, p.batch, p.state);
  for (Eigen::Index j = 0; j < g0.w_dec.cols(); ++j) {
    const Vector d = p.model.w_dec.col(j);
    const Vector want = g0.w_dec.col(j) - d.dot(g0.w_dec.col(j)) * d;
    CHECK((g1.w_dec.col(j) - want).cwiseAbs().maxCoeff() < 1e-12);
    CHECK(std::abs(d.dot(g1.w_dec.col(j))) < 1e-12);
  }
  CHECK(g1.w_enc == g0.w_enc);
  CHECK(g1.b_dec == g0.b_dec);
}

TEST_CASE("straight-through threshold gradient follows the rectangular kernel") {
  std::mt19937_64 rng(47);
  for (int trial = 0; trial < 20; ++trial) {
    auto p = oracle::random_problem(rng, ActivationKind::jumprelu_ste);
    p.model.config.activation.ste_bandwidth = 0.5;  // wide enough that many entries fall in the window
    std::fill(p.state.dead_mask.begin(), p.state.dead_mask.end(), false);
    const auto g = compute_gradients(p.model, p.batch, p.state);
    const auto& s = p.model;
    const double eps = s.config.activation.ste_bandwidth;
    const auto b = static_cast<double>(p.batch.rows());
    for (Eigen::Index j = 0; j < s.theta.size(); ++j) {
      double acc = 0.0;
      for (Eigen::Index i = 0; i < p.batch.rows(); ++i) {
        const Vector x = p.batch.row(i).transpose();
        const auto z = oracle::preact(s, x, s.b_dec);
        if (std::abs(z[static_cast<std::size_t>(j)] - s.theta[j]) >= eps / 2) continue;
        const auto f = oracle::encode(s, x);
        const auto xh = oracle::decode(s, f);
        double df = s.config.lambda / b;  // d(lambda * mean |f|)/df_j for f_j >= 0
        for (Eigen::Index k = 0; k < x.size(); ++k)
          df += 2.0 / b * (xh[static_cast<std::size_t>(k)] - x[k]) * s.w_dec(k, j);
        acc += df;
      }
      const double want = -(s.theta[j] / eps) * acc;
      CHECK(std::abs(g.theta[j] - want) < 1e-9 * std::max(1.0, std::abs(want)));
    }
  }
  // Non-STE kinds never produce a threshold gradient.
  auto q = oracle::random_problem(rng, ActivationKind::jumprelu);
  CHECK(compute_gradients(q.model, q.batch, q.state).theta.isZero(0.0));
}

TEST_CASE("gradient examples") {
  std::mt19937_64 rng(53);
  SUBCASE("zero batch with zero biases gives zero b_enc gradient") {
    for (auto kind : {ActivationKind::relu, ActivationKind::topk, ActivationKind::jumprelu_ste}) {
      auto p = oracle::random_problem(rng, kind);
      p.model.b_enc.setZero();
      p.model.b_dec.setZero();
      p.batch.setZero();
      CHECK(compute_gradients(p.model, p.batch, p.state).b_enc.isZero(0.0));
    }
  }
  SUBCASE("sparsity term contributes nothing at lambda = 0") {
    auto p = oracle::random_problem(rng, ActivationKind::relu);
    std::fill(p.state.dead_mask.begin(), p.state.dead_mask.end(), false);
    p.model.config.lambda = 0.0;
    const auto g0 = compute_gradients(p.model, p.batch, p.state);
    const auto l0 = compute_loss(p.model, p.batch, p.state);
    CHECK(l0.total == l0.recon);
    p.model.config.lambda = 0.1;
    const auto g1 = compute_gradients(p.model, p.batch, p.state);
    const auto feats = forward(p.model, p.batch).features;
    const auto b = static_cast<double>(p.batch.rows());
    for (Eigen::Index j = 0; j < feats.cols(); ++j) {
      const double active = static_cast<double>((feats.col(j).array() > 0.0).count());
      CHECK(g1.b_enc[j] - g0.b_enc[j] == doctest::Approx(0.1 * active / b).epsilon(1e-9));
    }
    CHECK((g1.w_dec - g0.w_dec).isZero(1e-14));
  }
}

TEST_CASE("ghost grads gating") {
  std::mt19937_64 rng(59);
  for (int trial = 0; trial < 20; ++trial) {
    auto p = oracle::random_problem(rng, static_cast<ActivationKind>(trial % 4));
    auto none = p.state;
    std::fill(none.dead_mask.begin(), none.dead_mask.end(), false);
    CHECK(compute_loss(p.model, p.batch, none).aux == 0.0);

    auto without = p.model;
    without.config.alpha = 0.0;
    const auto g_aux = compute_gradients(p.model, p.batch, p.state);
    const auto g_plain = compute_gradients(without, p.batch, p.state);
    CHECK(g_aux.b_dec == g_plain.b_dec);
    for (std::size_t j = 0; j < p.state.dead_mask.size(); ++j) {
      if (!p.state.dead_mask[j]) {
        const auto jj = static_cast<Eigen::Index>(j);
        CHECK(g_aux.b_enc[jj] == g_plain.b_enc[jj]);
        CHECK(g_aux.w_enc.row(jj) == g_plain.w_enc.row(jj));
      }
    }
  }
}

TEST_CASE("adam step matches the closed form") {
  auto s = init_model(config(3, 2), 2);
  auto state = TrainState::fresh(s);
  TrainerConfig t;
  t.learning_rate = 0.01;
  auto g = Gradients::zeros_like(s);

  SUBCASE("zero gradients leave parameters untouched") {
    const auto before = s;
    apply_step(s, state, g, t);
    CHECK(state.step == 1);
    CHECK(s.w_enc == before.w_enc);
    CHECK(s.b_enc == before.b_enc);
    CHECK(s.b_dec == before.b_dec);
    CHECK((s.w_dec - before.w_dec).cwiseAbs().maxCoeff() < 1e-15);
  }
  SUBCASE("two steps on a single coordinate") {
    const double p0 = s.b_enc[4];
    const double g1 = 0.3, g2 = -1.7;
    g.b_enc[4] = g1;
    apply_step(s, state, g, t);
    // First step: m^ = g, v^ = g^2.
    const double p1 = p0 - t.learning_rate * g1 / (std::abs(g1) + t.adam_eps);
    CHECK(std::abs(s.b_enc[4] - p1) < 1e-12);
    g.b_enc[4] = g2;
    apply_step(s, state, g, t);
    const double m = 0.9 * (0.1 * g1) + 0.1 * g2;
    const double v = 0.999 * (0.001 * g1 * g1) + 0.001 * g2 * g2;
    const double mh = m / (1 - 0.81), vh = v / (1 - 0.999 * 0.999);
    const double p2 = p1 - t.learning_rate * mh / (std::sqrt(vh) + t.adam_eps);
    CHECK(std::abs(s.b_enc[4] - p2) < 1e-12);
    CHECK(s.b_enc.norm() == doctest::Approx(std::abs(p2)));
  }
  SUBCASE("threshold updates only for the STE kind and stay non-negative") {
    g.theta.setConstant(5.0);
    apply_step(s, state, g, t);
    CHECK(s.theta.isZero(0.0));  // relu keeps its (unused) thresholds
    auto cfg = config(3, 2);
    cfg.activation = ActivationSpec::jumprelu_ste(0.005);
    auto ste = init_model(cfg, 2);
    auto st = TrainState::fresh(ste);
    auto gs = Gradients::zeros_like(ste);
    gs.theta.setConstant(5.0);
    apply_step(ste, st, gs, t);
    CHECK(ste.theta.minCoeff() >= 0.0);
    CHECK(ste.theta.maxCoeff() == 0.0);
  }
}

TEST_CASE("decoder columns stay unit norm across random steps") {
  std::mt19937_64 rng(61);
  std::normal_distribution<double> n01;
  auto s = init_model(config(6, 3), 9);
  auto state = TrainState::fresh(s);
  TrainerConfig t;
  t.learning_rate = 0.05;
  for (int step = 0; step < 50; ++step) {
    auto g = Gradients::zeros_like(s);
    g.w_dec = Matrix::NullaryExpr(g.w_dec.rows(), g.w_dec.cols(), [&] { return n01(rng); });
    g.w_enc = Matrix::NullaryExpr(g.w_enc.rows(), g.w_enc.cols(), [&] { return n01(rng); });
    apply_step(s, state, g, t);
    CHECK((s.w_dec.colwise().norm().array() - 1.0).abs().maxCoeff() < 1e-6);
  }
}

TEST_CASE("dead tracking") {
  auto s = init_model(config(2, 2), 0);
  auto state = TrainState::fresh(s);
  state.dead_token_threshold = 10;
  state.dead_step_window = 3;

  SUBCASE("always firing is never dead; never firing dies at the threshold") {
    Matrix f = Matrix::Zero(4, 4);
    f.col(0).setConstant(1.0);
    for (int i = 0; i < 5; ++i) {
      state.step += 1;
      update_dead_tracking(state, f);
      CHECK_FALSE(state.dead_mask[0]);
      CHECK(state.dead_mask[1] == (state.tokens_seen >= 10));
    }
    CHECK(state.tokens_seen == 20);
    CHECK(state.dead_count() == 3);
    CHECK(state.dead_count_window() == 3);
  }
  SUBCASE("random schedules agree with a replayed event log") {
    std::mt19937_64 rng(67);
    for (int trial = 0; trial < 30; ++trial) {
      auto st = TrainState::fresh(s);
      st.dead_token_threshold = 1 + rng() % 40;
      st.dead_step_window = 1 + rng() % 6;
      struct Event {
        std::uint64_t step, tokens_before;
        std::vector<bool> fired;
      };
      std::vector<Event> log;
      for (int step = 1; step <= 25; ++step) {
        const auto b = static_cast<Eigen::Index>(rng() % 5);
        Matrix f = Matrix::Zero(b, 4);
        for (Eigen::Index i = 0; i < b; ++i)
          for (Eigen::Index j = 0; j < 4; ++j)
            if (rng() % 7 == 0) f(i, j) = 0.5;
        Event e{static_cast<std::uint64_t>(step), st.tokens_seen, std::vector<bool>(4)};
        for (Eigen::Index j = 0; j < 4; ++j) e.fired[static_cast<std::size_t>(j)] = (f.col(j).array() > 0).any();
        log.push_back(e);
        st.step += 1;
        update_dead_tracking(st, f);

        // Replay: last token index / step at which each feature fired.
        for (std::size_t j = 0; j < 4; ++j) {
          std::uint64_t last_tok = 0, last_step = 0;
          for (const auto& ev : log) {
            if (ev.fired[j]) {
              last_tok = ev.tokens_before;
              last_step = ev.step;
            }
          }
          CHECK(st.dead_mask[j] == (st.tokens_seen - last_tok >= st.dead_token_threshold));
          CHECK(st.last_fired_step[j] == last_step);
        }
      }
    }
  }
}

TEST_CASE("synthetic data") {
  SUBCASE("no active features gives an all-zero shard") {
    SyntheticSpec spec;
    spec.d_in = 5;
    spec.n_true_features = 9;
    spec.avg_active = 0.0;
    spec.n_samples = 100;
    const auto d = generate_synthetic(spec);
    CHECK(d.shard.rows() == 100);
    CHECK(std::all_of(d.shard.data().begin(), d.shard.data().end(), [](float v) { return v == 0.f; }));
  }
  SUBCASE("dictionary columns are unit norm and generation is deterministic") {
    const auto a = toy_data(3, 500), b = toy_data(3, 500);
    CHECK((a.dictionary.colwise().norm().array() - 1.0).abs().maxCoeff() < 1e-9);
    CHECK(a.dictionary == b.dictionary);
    CHECK(a.shard == b.shard);
    CHECK_FALSE(toy_data(4, 500).shard == a.shard);
    // Average activity is close to the requested mean.
    CHECK(static_cast<double>(a.codes.nonZeros()) / 500.0 == doctest::Approx(2.0).epsilon(0.15));
    for (int k = 0; k < a.codes.outerSize(); ++k)
      for (Eigen::SparseMatrix<double, Eigen::RowMajor>::InnerIterator it(a.codes, k); it; ++it) {
        CHECK(it.value() >= 0.5);
        CHECK(it.value() <= 1.5);
      }
  }
  SUBCASE("identity dictionary samples lie in the span of their active columns") {
    SyntheticSpec spec;
    spec.d_in = spec.n_true_features = 12;
    spec.avg_active = 3;
    spec.n_samples = 300;
    spec.identity_dictionary = true;
    const auto d = generate_synthetic(spec);
    CHECK(d.dictionary == Matrix::Identity(12, 12));
    const Matrix x = d.shard.to_matrix();
    for (int i = 0; i < d.codes.outerSize(); ++i) {
      std::vector<Eigen::Index> active;
      for (Eigen::SparseMatrix<double, Eigen::RowMajor>::InnerIterator it(d.codes, i); it; ++it)
        active.push_back(it.col());
      const Matrix basis = d.dictionary(Eigen::all, active);
      const Vector xi = x.row(i).transpose();
      Vector proj = Vector::Zero(12);
      if (!active.empty()) proj = basis * basis.colPivHouseholderQr().solve(xi);
      CHECK((xi - proj).norm() < 1e-9);
    }
  }
}

TEST_CASE("train") {
  const auto data = toy_data(1);
  auto cfg = config(8, 4, 0.01);

  SUBCASE("reconstruction improves within 200 steps (mean of 3 seeds)") {
    double first = 0.0, last = 0.0;
    for (std::uint64_t seed : {0, 1, 2}) {
      const auto r = train(init_model(cfg, seed), {data.shard}, quick(200, seed));
      first += r.log.rows.front().mse;
      last += r.log.rows.back().mse;
      CHECK(r.log.rows.front().step == 1);
      CHECK(r.log.rows.back().step == 200);
      CHECK(r.log.rows.size() == 21);
    }
    CHECK(last < first);
  }
  SUBCASE("identical inputs give identical logs") {
    const auto a = train(init_model(cfg, 5), {data.shard}, quick(60, 5));
    const auto b = train(init_model(cfg, 5), {data.shard}, quick(60, 5));
    CHECK(a.log.to_csv() == b.log.to_csv());
    CHECK(a.model.w_dec == b.model.w_dec);
    CHECK(a.log.to_csv().rfind("step,mse,l1,l0,l0_normalized,dead_1000,aux\n", 0) == 0);
    const auto c = train(init_model(cfg, 5), {data.shard}, quick(60, 6));
    CHECK(a.log.to_csv() != c.log.to_csv());
  }
  SUBCASE("batches draw from every shard") {
    const auto other = toy_data(2, 300);
    const auto r = train(init_model(cfg, 0), {data.shard, other.shard}, quick(20));
    CHECK(r.state.step == 20);
    CHECK(r.state.tokens_seen == 20 * 64);
  }
  SUBCASE("dense configuration trains and is less sparse than lambda 0.1") {
    auto dense = cfg;
    dense.lambda = 0.0;
    auto sparse = cfg;
    sparse.lambda = 0.1;
    const auto t = quick(300);
    const auto rd = train(init_model(dense, 0), {data.shard}, t);
    const auto rs = train(init_model(sparse, 0), {data.shard}, t);
    CHECK(measure_dataset(rd.model, {data.shard}).l0 > measure_dataset(rs.model, {data.shard}).l0);
  }
  SUBCASE("shape mismatch and divergence") {
    CHECK_THROWS_AS(train(init_model(config(7, 2), 0), {data.shard}, quick(1)), DimensionError);
    auto t = quick(50);
    t.learning_rate = 1e200;
    try {
      train(init_model(cfg, 0), {data.shard}, t);
      FAIL("expected divergence");
    } catch (const DivergenceError& e) {
      CHECK(e.step() >= 1);
      CHECK(e.last_good().w_enc.allFinite());
    }
  }
}

TEST_CASE("measure_dataset agrees with forward") {
  const auto data = toy_data(8, 5000);
  const auto s = init_model(config(8, 2), 1);
  const auto stats = measure_dataset(s, {data.shard});
  const Matrix x = data.shard.to_matrix();
  const auto out = forward(s, x);
  CHECK(stats.n_rows == 5000);
  CHECK(stats.mse == doctest::Approx((out.recon - x).squaredNorm() / 5000.0).epsilon(1e-12));
  CHECK(stats.l0 == doctest::Approx(l0_count(out.features)).epsilon(1e-12));
  CHECK(stats.l0_normalized == doctest::Approx(l0_count(out.features) / 16.0).epsilon(1e-12));
  CHECK(measure_dataset(s, {data.shard}, 100).n_rows == 100);
}
