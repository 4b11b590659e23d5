#include "psae/trainer.hpp"

#include <algorithm>
#include <cinttypes>
#include <cmath>
#include <cstdio>
#include <random>

namespace psae {

Gradients Gradients::zeros_like(const SaeModel& model) {
  Gradients g;
  g.w_enc = Matrix::Zero(model.w_enc.rows(), model.w_enc.cols());
  g.b_enc = Vector::Zero(model.b_enc.size());
  g.w_dec = Matrix::Zero(model.w_dec.rows(), model.w_dec.cols());
  g.b_dec = Vector::Zero(model.b_dec.size());
  g.theta = Vector::Zero(model.theta.size());
  return g;
}

bool Gradients::all_finite() const {
  return w_enc.allFinite() && b_enc.allFinite() && w_dec.allFinite() && b_dec.allFinite() &&
         theta.allFinite();
}

TrainerConfig TrainerConfig::desk_profile() {
  TrainerConfig c;
  c.batch_size = 512;
  c.total_steps = 20'000;
  return c;
}

void TrainerConfig::validate() const {
  if (batch_size == 0) throw ConfigError("batch_size must be positive");
  if (!(learning_rate > 0.0)) throw ConfigError("learning_rate must be positive");
  if (!(adam_beta1 >= 0.0 && adam_beta1 < 1.0)) throw ConfigError("adam_beta1 must be in [0, 1)");
  if (!(adam_beta2 >= 0.0 && adam_beta2 < 1.0)) throw ConfigError("adam_beta2 must be in [0, 1)");
  if (!(adam_eps > 0.0)) throw ConfigError("adam_eps must be positive");
  if (log_every == 0) throw ConfigError("log_every must be positive");
}

TrainState TrainState::fresh(const SaeModel& model) {
  const auto m = model.n_features();
  TrainState s;
  s.adam_m = Gradients::zeros_like(model);
  s.adam_v = Gradients::zeros_like(model);
  s.last_fired_token.assign(m, 0);
  s.last_fired_step.assign(m, 0);
  s.dead_mask.assign(m, false);
  s.dead_token_threshold = model.config.dead_token_threshold;
  s.dead_step_window = model.config.dead_step_window;
  return s;
}

std::size_t TrainState::dead_count() const {
  return static_cast<std::size_t>(std::count(dead_mask.begin(), dead_mask.end(), true));
}

std::size_t TrainState::dead_count_window() const {
  std::size_t n = 0;
  for (auto fired : last_fired_step) n += (step - fired >= dead_step_window) ? 1 : 0;
  return n;
}

void TrainState::refresh_dead_mask() {
  for (std::size_t j = 0; j < dead_mask.size(); ++j) {
    dead_mask[j] = tokens_seen - last_fired_token[j] >= dead_token_threshold;
  }
}

namespace {

std::vector<Eigen::Index> dead_features(const TrainState& state, std::size_t m) {
  std::vector<Eigen::Index> dead;
  if (state.dead_mask.size() != m) return dead;
  for (std::size_t j = 0; j < m; ++j) {
    if (state.dead_mask[j]) dead.push_back(static_cast<Eigen::Index>(j));
  }
  return dead;
}

// Per row, keep the k largest positive pre-activations among `dead`
// (ties to the lower index). Returns B x |dead|.
Matrix select_dead(const Matrix& pre, const std::vector<Eigen::Index>& dead, std::size_t k) {
  const auto n_dead = static_cast<Eigen::Index>(dead.size());
  Matrix z = Matrix::Zero(pre.rows(), n_dead);
  std::vector<Eigen::Index> cand;
  cand.reserve(dead.size());
  for (Eigen::Index i = 0; i < pre.rows(); ++i) {
    cand.clear();
    for (Eigen::Index c = 0; c < n_dead; ++c) {
      if (pre(i, dead[static_cast<std::size_t>(c)]) > 0.0) cand.push_back(c);
    }
    if (cand.size() > k) {
      const auto by_value = [&](Eigen::Index a, Eigen::Index b) {
        const double va = pre(i, dead[static_cast<std::size_t>(a)]);
        const double vb = pre(i, dead[static_cast<std::size_t>(b)]);
        return va != vb ? va > vb : a < b;
      };
      std::nth_element(cand.begin(), cand.begin() + static_cast<std::ptrdiff_t>(k) - 1, cand.end(),
                       by_value);
      cand.resize(k);
    }
    for (auto c : cand) z(i, c) = pre(i, dead[static_cast<std::size_t>(c)]);
  }
  return z;
}

}  // namespace

Evaluation evaluate(const SaeModel& model, const Matrix& batch, const TrainState& state,
                    bool with_gradients, GradientOptions options) {
  const auto& cfg = model.config;
  const Eigen::Index b = batch.rows();
  const auto m = model.n_features();

  Evaluation out;
  if (with_gradients) out.grads = Gradients::zeros_like(model);
  if (b == 0) {
    out.features = Matrix::Zero(0, static_cast<Eigen::Index>(m));
    return out;
  }
  if (static_cast<std::size_t>(batch.cols()) != model.d_in()) {
    throw DimensionError("batch has width " + std::to_string(batch.cols()) + ", model expects " +
                         std::to_string(model.d_in()));
  }
  const double inv_b = 1.0 / static_cast<double>(b);

  Matrix centered = batch.rowwise() - model.b_dec.transpose();
  Matrix pre(b, static_cast<Eigen::Index>(m));
  pre.noalias() = centered * model.w_enc.transpose();
  pre.rowwise() += model.b_enc.transpose();
  out.features = apply_activation(cfg.activation, model.theta, pre);
  const Matrix& f = out.features;

  Matrix residual(b, batch.cols());  // x^ - x
  residual.noalias() = f * model.w_dec.transpose();
  residual.rowwise() += model.b_dec.transpose();
  residual -= batch;

  out.loss.recon = residual.squaredNorm() * inv_b;
  out.loss.sparse = f.cwiseAbs().sum() * inv_b;

  // Ghost grads: dead latents reconstruct e = x - x^, which is held constant.
  const auto dead = dead_features(state, m);
  Matrix z_dead;
  Matrix dead_dirs;
  Matrix aux_residual;  // e^ - e
  if (!dead.empty()) {
    z_dead = select_dead(pre, dead, cfg.k_aux);
    dead_dirs = model.w_dec(Eigen::all, dead);
    aux_residual.noalias() = z_dead * dead_dirs.transpose();
    aux_residual += residual;  // e^ - e = e^ + (x^ - x)
    out.loss.aux = aux_residual.squaredNorm() * inv_b;
  }
  out.loss.total = out.loss.recon + cfg.lambda * out.loss.sparse + cfg.alpha * out.loss.aux;
  if (!std::isfinite(out.loss.total)) throw NumericError("non-finite loss");
  if (!with_gradients) return out;

  Gradients& g = out.grads;
  const Matrix grad_recon = (2.0 * inv_b) * residual;  // dL/dx^
  g.w_dec.noalias() = grad_recon.transpose() * f;
  g.b_dec = grad_recon.colwise().sum().transpose();

  Matrix grad_f(b, static_cast<Eigen::Index>(m));  // dL/df
  grad_f.noalias() = grad_recon * model.w_dec;
  grad_f.array() += cfg.lambda * inv_b;

  // Every activation kind passes gradient 1 exactly where it kept the input.
  Matrix grad_pre = (f.array() > 0.0).select(grad_f, 0.0);

  if (cfg.activation.kind == ActivationKind::jumprelu_ste) {
    const double eps = cfg.activation.ste_bandwidth;
    for (Eigen::Index j = 0; j < static_cast<Eigen::Index>(m); ++j) {
      const double th = model.theta[j];
      double acc = 0.0;
      for (Eigen::Index i = 0; i < b; ++i) {
        if (std::abs(pre(i, j) - th) < 0.5 * eps) acc += grad_f(i, j);
      }
      g.theta[j] = -(th / eps) * acc;
    }
  }

  // b_dec sees the encoder path of the main loss only.
  g.b_dec -= model.w_enc.transpose() * grad_pre.colwise().sum().transpose();

  if (!dead.empty() && cfg.alpha > 0.0) {
    const Matrix grad_aux = (2.0 * cfg.alpha * inv_b) * aux_residual;  // d(alpha*aux)/de^
    Matrix dec_grad(dead_dirs.rows(), dead_dirs.cols());
    dec_grad.noalias() = grad_aux.transpose() * z_dead;
    Matrix grad_z(b, dead_dirs.cols());
    grad_z.noalias() = grad_aux * dead_dirs;
    for (std::size_t c = 0; c < dead.size(); ++c) {
      const auto j = dead[c];
      const auto cc = static_cast<Eigen::Index>(c);
      g.w_dec.col(j) += dec_grad.col(cc);
      for (Eigen::Index i = 0; i < b; ++i) {
        if (z_dead(i, cc) > 0.0) grad_pre(i, j) += grad_z(i, cc);
      }
    }
  }

  g.w_enc.noalias() = grad_pre.transpose() * centered;
  g.b_enc = grad_pre.colwise().sum().transpose();

  if (options.project_decoder) {
    for (Eigen::Index j = 0; j < g.w_dec.cols(); ++j) {
      const double sq = model.w_dec.col(j).squaredNorm();
      if (sq > 0.0) {
        g.w_dec.col(j) -= (model.w_dec.col(j).dot(g.w_dec.col(j)) / sq) * model.w_dec.col(j);
      }
    }
  }
  if (!g.all_finite()) throw NumericError("non-finite gradient");
  return out;
}

LossBreakdown compute_loss(const SaeModel& model, const Matrix& batch, const TrainState& state) {
  return evaluate(model, batch, state, false).loss;
}

Gradients compute_gradients(const SaeModel& model, const Matrix& batch, const TrainState& state,
                            GradientOptions options) {
  return evaluate(model, batch, state, true, options).grads;
}

namespace {

template <class Param>
void adam_update(Param& p, const Param& grad, Param& m, Param& v, double lr, double b1, double b2,
                 double eps, double bias1, double bias2) {
  m = b1 * m + (1.0 - b1) * grad;
  v = b2 * v + (1.0 - b2) * grad.cwiseProduct(grad);
  p.array() -= lr * (m.array() / bias1) / ((v.array() / bias2).sqrt() + eps);
}

}  // namespace

void apply_step(SaeModel& model, TrainState& state, const Gradients& grads,
                const TrainerConfig& config) {
  state.step += 1;
  const auto t = static_cast<double>(state.step);
  const double bias1 = 1.0 - std::pow(config.adam_beta1, t);
  const double bias2 = 1.0 - std::pow(config.adam_beta2, t);
  const auto update = [&](auto& p, const auto& g, auto& m, auto& v) {
    adam_update(p, g, m, v, config.learning_rate, config.adam_beta1, config.adam_beta2,
                config.adam_eps, bias1, bias2);
  };
  update(model.w_enc, grads.w_enc, state.adam_m.w_enc, state.adam_v.w_enc);
  update(model.b_enc, grads.b_enc, state.adam_m.b_enc, state.adam_v.b_enc);
  update(model.w_dec, grads.w_dec, state.adam_m.w_dec, state.adam_v.w_dec);
  update(model.b_dec, grads.b_dec, state.adam_m.b_dec, state.adam_v.b_dec);
  if (model.config.activation.kind == ActivationKind::jumprelu_ste) {
    update(model.theta, grads.theta, state.adam_m.theta, state.adam_v.theta);
    model.theta = model.theta.cwiseMax(0.0);
  }
  normalize_decoder(model);
}

void update_dead_tracking(TrainState& state, const Matrix& features) {
  if (features.rows() > 0) {
    const auto fired = (features.array() > 0.0).colwise().any();
    for (Eigen::Index j = 0; j < features.cols(); ++j) {
      if (fired[j]) {
        state.last_fired_token[static_cast<std::size_t>(j)] = state.tokens_seen;
        state.last_fired_step[static_cast<std::size_t>(j)] = state.step;
      }
    }
  }
  state.tokens_seen += static_cast<std::uint64_t>(features.rows());
  state.refresh_dead_mask();
}

std::string TrainLog::to_csv() const {
  std::string out = "step,mse,l1,l0,l0_normalized,dead_1000,aux\n";
  char buf[256];
  for (const auto& r : rows) {
    std::snprintf(buf, sizeof buf, "%" PRIu64 ",%.9g,%.9g,%.9g,%.9g,%zu,%.9g\n", r.step, r.mse, r.l1,
                  r.l0, r.l0_normalized, r.dead_1000, r.aux);
    out += buf;
  }
  return out;
}

namespace {

class RowPool {
 public:
  RowPool(const std::vector<ActivationShard>& shards, std::size_t d_in) : shards_(shards) {
    if (shards.empty()) throw Error("no activation shards given");
    std::size_t total = 0;
    for (const auto& s : shards) {
      if (s.cols() != d_in) {
        throw DimensionError("shard d_model " + std::to_string(s.cols()) +
                             " does not match model d_in " + std::to_string(d_in));
      }
      offsets_.push_back(total);
      total += s.rows();
    }
    if (total == 0) throw Error("activation shards contain no rows");
    total_ = total;
  }

  std::size_t size() const noexcept { return total_; }

  void copy_row(std::size_t global, double* dst) const {
    const auto it = std::upper_bound(offsets_.begin(), offsets_.end(), global) - 1;
    const auto s = static_cast<std::size_t>(it - offsets_.begin());
    const auto row = shards_[s].row(global - *it);
    std::copy(row.begin(), row.end(), dst);
  }

 private:
  const std::vector<ActivationShard>& shards_;
  std::vector<std::size_t> offsets_;
  std::size_t total_ = 0;
};

}  // namespace

TrainResult train(SaeModel model, const std::vector<ActivationShard>& shards,
                  const TrainerConfig& config, const TrainCallback& on_log,
                  const StepCallback& on_step) {
  model.validate();
  config.validate();
  const RowPool pool(shards, model.d_in());

  TrainResult result;
  result.state = TrainState::fresh(model);
  TrainState& state = result.state;

  std::mt19937_64 rng(config.seed);
  std::uniform_int_distribution<std::size_t> pick(0, pool.size() - 1);
  Matrix batch(static_cast<Eigen::Index>(config.batch_size), static_cast<Eigen::Index>(model.d_in()));

  while (state.step < config.total_steps) {
    for (Eigen::Index i = 0; i < batch.rows(); ++i) pool.copy_row(pick(rng), batch.row(i).data());

    Evaluation ev;
    try {
      ev = evaluate(model, batch, state, true);
    } catch (const NumericError& e) {
      throw DivergenceError(std::string(e.what()) + " at step " + std::to_string(state.step + 1),
                            model, state.step);
    }
    apply_step(model, state, ev.grads, config);
    update_dead_tracking(state, ev.features);
    if (on_step) on_step(model, state);

    if (state.step == 1 || state.step % config.log_every == 0 || state.step == config.total_steps) {
      TrainLogRow row;
      row.step = state.step;
      row.mse = ev.loss.recon;
      row.l1 = ev.loss.sparse;
      row.l0 = l0_count(ev.features);
      row.l0_normalized = l0_normalized(ev.features);
      row.dead_1000 = state.dead_count_window();
      row.aux = ev.loss.aux;
      result.log.rows.push_back(row);
      if (on_log) on_log(row);
    }
  }
  result.model = std::move(model);
  return result;
}

DatasetStats measure_dataset(const SaeModel& model, const std::vector<ActivationShard>& shards,
                             std::size_t max_rows) {
  constexpr std::size_t kChunk = 4096;
  DatasetStats stats;
  double sq = 0.0, l1 = 0.0, active = 0.0;
  for (const auto& shard : shards) {
    if (shard.cols() != model.d_in()) {
      throw DimensionError("shard d_model " + std::to_string(shard.cols()) +
                           " does not match model d_in " + std::to_string(model.d_in()));
    }
    for (std::size_t start = 0; start < shard.rows(); start += kChunk) {
      std::size_t n = std::min(kChunk, shard.rows() - start);
      if (max_rows != 0) n = std::min(n, max_rows - stats.n_rows);
      if (n == 0) break;
      Matrix batch(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(shard.cols()));
      for (std::size_t i = 0; i < n; ++i) {
        const auto row = shard.row(start + i);
        std::copy(row.begin(), row.end(), batch.row(static_cast<Eigen::Index>(i)).data());
      }
      const auto out = forward(model, batch);
      sq += (out.recon - batch).squaredNorm();
      l1 += out.features.sum();
      active += static_cast<double>((out.features.array() > 0.0).count());
      stats.n_rows += n;
    }
  }
  if (stats.n_rows > 0) {
    const auto rows = static_cast<double>(stats.n_rows);
    stats.mse = sq / rows;
    stats.l1 = l1 / rows;
    stats.l0 = active / rows;
    stats.l0_normalized = stats.l0 / static_cast<double>(model.n_features());
  }
  return stats;
}

}  // namespace psae
