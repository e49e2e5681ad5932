#include "oldpf/learn.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <memory>
#include <numeric>
#include <stdexcept>

#include "oldpf/rng.hpp"

namespace oldpf::learn {

WindowAccumulator::WindowAccumulator(int window_len) : window_len_(window_len) {
  if (window_len < 1) throw std::invalid_argument("WindowAccumulator: window_len must be >= 1");
}

void WindowAccumulator::push(Var lse_w, Var lse_w_tilde_prev) {
  if (full())
    throw std::logic_error("WindowAccumulator: window already holds " +
                           std::to_string(window_len_) + " terms");
  terms_.emplace_back(lse_w, lse_w_tilde_prev);
}

void WindowAccumulator::advance() {
  ++window_index_;
  terms_.clear();
}

Var window_loss(Tape& tape, const WindowAccumulator& acc) {
  if (!acc.full())
    throw std::invalid_argument("window_loss: have " + std::to_string(acc.size()) +
                                " of " + std::to_string(acc.window_len()) + " terms");
  Var total;
  for (const auto& [lse_w, lse_prev] : acc.terms()) {
    Var inc = tape.sub(lse_w, lse_prev);
    total = total.valid() ? tape.add(total, inc) : inc;
  }
  return tape.neg(total);
}

bool AdamState::step(ParameterStore& store) {
  if (!store.grads_finite()) {
    ++skipped_;
    store.zero_grads();
    return false;
  }
  ++t_;
  const double bc1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(t_));
  const double bc2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(t_));
  for (const auto& name : store.names()) {
    const Mat& g = store.grad(name);
    auto mit = m_.find(name);
    if (mit == m_.end()) {
      m_[name] = Mat::Zero(g.rows(), g.cols());
      v_[name] = Mat::Zero(g.rows(), g.cols());
      mit = m_.find(name);
    }
    Mat& m = mit->second;
    Mat& v = v_[name];
    if (m.rows() != g.rows() || m.cols() != g.cols())
      throw std::logic_error("AdamState: moment shape mismatch for " + name);
    m = cfg_.beta1 * m + (1.0 - cfg_.beta1) * g;
    v = cfg_.beta2 * v + (1.0 - cfg_.beta2) * g.cwiseProduct(g);
    const Mat m_hat = m / bc1;
    const Mat v_hat = v / bc2;
    store.value(name) -=
        (cfg_.lr * m_hat.array() / (v_hat.array().sqrt() + cfg_.eps)).matrix();
  }
  store.zero_grads();
  return true;
}

namespace {

constexpr double kNegInf = -std::numeric_limits<double>::infinity();

struct DetachedEnsemble {
  Mat states, log_w, log_w_tilde;
};

DetachedEnsemble detach(const Tape& tape, const pf::ParticleEnsemble& ens) {
  return {tape.value(ens.states), tape.value(ens.log_w), tape.value(ens.log_w_tilde)};
}

pf::ParticleEnsemble attach(Tape& tape, const DetachedEnsemble& d) {
  pf::ParticleEnsemble ens;
  ens.states = tape.constant(d.states);
  ens.log_w = tape.constant(d.log_w);
  ens.log_w_tilde = tape.constant(d.log_w_tilde);
  return ens;
}

enum class LossMode { Evidence, Supervised };

OnlineRunRecord run_loop(const std::vector<Eigen::VectorXd>& observations,
                         SsmComponents& model, const OnlineRunConfig& cfg,
                         std::mt19937_64& rng, LossMode mode,
                         const std::vector<Eigen::VectorXd>* truth) {
  if (mode == LossMode::Supervised && truth == nullptr)
    throw std::invalid_argument("supervised run requires ground-truth states");
  if (truth != nullptr && truth->size() < observations.size() + 1)
    throw std::invalid_argument("truth must cover x_0..x_T");
  if (cfg.window < 1) throw std::invalid_argument("online run: window must be >= 1");

  const int n = cfg.filter.num_particles;
  const int d = model.state_dim();
  ParameterStore& store = model.params();
  AdamState adam(cfg.adam);

  OnlineRunRecord rec;
  rec.estimates.reserve(observations.size());

  auto tape = std::make_unique<Tape>();
  pf::ParticleEnsemble ens = pf::init_particles(*tape, cfg.filter, rng);
  WindowAccumulator acc(cfg.window);
  // lse of log w~_0; the initial weights sum to 1
  Var prev_lse_tilde = tape->logsumexp(ens.log_w_tilde);
  std::vector<Var> window_sqerr;

  const int t_max = static_cast<int>(observations.size());
  for (int t = 1; t <= t_max; ++t) {
    const Eigen::VectorXd& y = observations[static_cast<std::size_t>(t - 1)];
    const Mat noise = randn(rng, n, d);
    ens = pf::propose_and_weight(*tape, ens, y, model, noise);

    if (tape->value(ens.log_w).maxCoeff() == kNegInf) {
      // filter collapse: reset weights to uniform and keep streaming
      ++rec.collapse_events;
      ens.log_w = tape->constant(Mat::Constant(n, 1, -std::log(static_cast<double>(n))));
      ens.log_w_tilde = ens.log_w;
    }

    Var lse_t = tape->logsumexp(ens.log_w);
    acc.push(lse_t, prev_lse_tilde);

    Var wbar = pf::normalized_weights(*tape, ens);
    Var est = tape->col_sum(tape->mul(wbar, ens.states));
    rec.estimates.emplace_back(tape->value(est).row(0).transpose());

    if (truth != nullptr) {
      const Eigen::VectorXd& x_true = (*truth)[static_cast<std::size_t>(t)];
      Var err = tape->sq_err(est, tape->constant(x_true.transpose()));
      rec.step_sq_errors.push_back(tape->scalar(err));
      if (mode == LossMode::Supervised) window_sqerr.push_back(err);
    }

    const Eigen::VectorXd wvals = tape->value(wbar).col(0);
    StepDiagnostic diag;
    diag.t = t;
    diag.ess = pf::ess(wvals);
    diag.log_evidence_increment = tape->scalar(lse_t) - tape->scalar(prev_lse_tilde);
    if (pf::weight_degenerate(wvals)) ++rec.degeneracy_events;

    const bool boundary = (t % cfg.window == 0);
    if (boundary) {
      if (cfg.learning) {
        Var loss;
        if (mode == LossMode::Evidence) {
          loss = window_loss(*tape, acc);
        } else {
          Var sum;
          for (Var e : window_sqerr) sum = sum.valid() ? tape->add(sum, e) : e;
          loss = tape->scale(sum, 1.0 / cfg.window);
        }
        rec.window_losses.push_back(tape->scalar(loss));
        store.zero_grads();
        tape->backward(loss);
        if (adam.step(store)) {
          ++rec.optimizer_steps;
        } else {
          ++rec.skipped_updates;
        }
        if (cfg.record_snapshots) rec.param_snapshots.push_back(store);
      }
      // truncate backprop: next window starts from constants
      DetachedEnsemble frozen = detach(*tape, ens);
      tape = std::make_unique<Tape>();
      ens = attach(*tape, frozen);
      acc.advance();
      window_sqerr.clear();
    }

    if (cfg.resampling_enabled && diag.ess < cfg.filter.ess_threshold) {
      pf::multinomial_resample(*tape, ens, rng);
      diag.resampled = true;
      prev_lse_tilde = tape->constant_scalar(std::log(static_cast<double>(n)));
    } else {
      ens.log_w_tilde = ens.log_w;
      ens.resampled = false;
      prev_lse_tilde = boundary ? tape->logsumexp(ens.log_w) : lse_t;
    }
    rec.diagnostics.push_back(diag);
  }
  return rec;
}

}  // namespace

OnlineRunRecord online_run(const std::vector<Eigen::VectorXd>& observations,
                           SsmComponents& model, const OnlineRunConfig& cfg,
                           std::mt19937_64& rng, const std::vector<Eigen::VectorXd>* truth) {
  return run_loop(observations, model, cfg, rng, LossMode::Evidence, truth);
}

OnlineRunRecord supervised_online_run(const ssm::Trajectory& trajectory,
                                      SsmComponents& model, const OnlineRunConfig& cfg,
                                      std::mt19937_64& rng) {
  return run_loop(trajectory.observations, model, cfg, rng, LossMode::Supervised,
                  &trajectory.states);
}

Var supervised_filter_loss(Tape& tape, const ssm::Trajectory& trajectory,
                           SsmComponents& model, const pf::FilterConfig& filter_cfg,
                           std::mt19937_64& rng, bool resampling_enabled) {
  const int n = filter_cfg.num_particles;
  const int d = model.state_dim();
  pf::ParticleEnsemble ens = pf::init_particles(tape, filter_cfg, rng);
  Var loss;
  const int t_max = trajectory.steps();
  for (int t = 1; t <= t_max; ++t) {
    const Mat noise = randn(rng, n, d);
    ens = pf::propose_and_weight(tape, ens, trajectory.observations[t - 1], model, noise);
    Var wbar = pf::normalized_weights(tape, ens);
    Var est = tape.col_sum(tape.mul(wbar, ens.states));
    Var err = tape.sq_err(est, tape.constant(trajectory.states[t].transpose()));
    loss = loss.valid() ? tape.add(loss, err) : err;
    if (resampling_enabled && pf::ess(tape.value(wbar).col(0)) < filter_cfg.ess_threshold) {
      pf::multinomial_resample(tape, ens, rng);
    } else {
      ens.log_w_tilde = ens.log_w;
    }
  }
  return tape.scale(loss, 1.0 / t_max);
}

PretrainResult pretrain(const std::vector<ssm::Trajectory>& dataset, SsmComponents& model,
                        const PretrainConfig& cfg) {
  if (dataset.empty()) throw std::invalid_argument("pretrain: empty dataset");
  PretrainResult res;
  res.init_bounds = ssm::state_bounds(dataset);
  const pf::FilterConfig filter_cfg =
      pf::FilterConfig::with_defaults(cfg.num_particles, res.init_bounds);

  const int n_total = static_cast<int>(dataset.size());
  int n_val = static_cast<int>(std::lround(cfg.val_fraction * n_total));
  n_val = std::clamp(n_val, n_total > 1 ? 1 : 0, n_total - 1);
  const int n_train = n_total - n_val;

  ParameterStore& store = model.params();
  AdamState adam(cfg.adam);
  auto shuffle_rng = make_rng(cfg.seed, 0xA11CE);

  auto epoch_pass = [&](int first, int count, bool train, int epoch) {
    double total = 0.0;
    std::vector<int> order(count);
    std::iota(order.begin(), order.end(), first);
    if (train) std::shuffle(order.begin(), order.end(), shuffle_rng);
    int in_batch = 0;
    for (int bi = 0; bi < count; ++bi) {
      const int idx = order[static_cast<std::size_t>(bi)];
      // per-trajectory filter streams are reproducible across epochs
      auto run_rng = make_rng(cfg.seed, 0xF11 + static_cast<std::uint64_t>(idx) +
                                            (train ? 7919ULL * (epoch + 1) : 0ULL));
      Tape tape;
      Var loss = supervised_filter_loss(tape, dataset[static_cast<std::size_t>(idx)], model,
                                        filter_cfg, run_rng);
      const double lval = tape.scalar(loss);
      if (!std::isfinite(lval))
        throw std::runtime_error("pretrain: non-finite loss at epoch " +
                                 std::to_string(epoch) + ", trajectory " + std::to_string(idx));
      total += lval;
      if (train) {
        const int batch =
            std::min(cfg.batch_size, count - (bi / cfg.batch_size) * cfg.batch_size);
        tape.backward(loss, 1.0 / batch);
        if (++in_batch == batch) {
          adam.step(store);
          in_batch = 0;
        }
      }
    }
    return total / count;
  };

  double best_val = std::numeric_limits<double>::infinity();
  int stale = 0;
  for (int epoch = 0; epoch < cfg.max_epochs; ++epoch) {
    store.zero_grads();
    const double train_loss = epoch_pass(0, n_train, true, epoch);
    const double val_loss =
        n_val > 0 ? epoch_pass(n_train, n_val, false, epoch) : train_loss;
    res.train_curve.push_back(train_loss);
    res.val_curve.push_back(val_loss);
    ++res.epochs_run;
    if (val_loss < best_val * (1.0 - 1e-3)) {
      best_val = val_loss;
      res.best_params = store;
      stale = 0;
    } else if (++stale >= cfg.patience) {
      break;
    }
  }
  if (res.best_params.size() == 0) res.best_params = store;
  res.best_val = best_val;
  // leave the model holding the best checkpoint
  for (const auto& name : res.best_params.names())
    store.value(name) = res.best_params.value(name);
  return res;
}

}  // namespace oldpf::learn
