#include "oldpf/flows.hpp"

#include <cmath>
#include <stdexcept>

#include "oldpf/rng.hpp"

namespace oldpf::flows {

namespace {

void check_finite(const Mat& m, const char* what) {
  if (m.allFinite()) return;
  for (Eigen::Index i = 0; i < m.rows(); ++i)
    for (Eigen::Index j = 0; j < m.cols(); ++j)
      if (!std::isfinite(m(i, j)))
        throw std::domain_error(std::string(what) + ": non-finite input at (" +
                                std::to_string(i) + "," + std::to_string(j) + ")");
}

Var row_logdet(Tape& tape, Var s, int nrows) {
  Var ld = tape.row_sum(s);
  if (tape.value(ld).rows() == 1 && nrows > 1) ld = tape.tile_rows(ld, nrows);
  return ld;
}

}  // namespace

// ---------------------------------------------------------------------------
// FlowStack

FlowStack::FlowStack(ParameterStore& store, const std::string& prefix, int dim,
                     int cond_dim, const FlowConfig& cfg, std::mt19937_64& rng)
    : dim_(dim), cond_dim_(cond_dim) {
  if (dim < 1) throw std::invalid_argument("FlowStack: dim must be >= 1");
  if (cfg.depth < 1) throw std::invalid_argument("FlowStack: depth must be >= 1");
  // 1-D states leave nothing to couple; a single elementwise affine layer
  // (conditioned when cond_dim > 0) takes the coupling stack's place.
  const int depth = dim == 1 ? 1 : cfg.depth;
  const int n_front = (dim + 1) / 2;
  for (int k = 0; k < depth; ++k) {
    CouplingLayer layer;
    layer.dim = dim;
    layer.cond_dim = cond_dim;
    layer.clamp = cfg.clamp;
    layer.transform_front = (k % 2 == 1) || dim == 1;
    if (dim == 1) {
      layer.n_tr = 1;
      layer.n_pass = 0;
    } else if (layer.transform_front) {
      layer.n_tr = n_front;
      layer.n_pass = dim - n_front;
    } else {
      layer.n_pass = n_front;
      layer.n_tr = dim - n_front;
    }
    const std::string lp = prefix + "L" + std::to_string(k) + ".";
    const int in_width = layer.n_pass + cond_dim;
    if (in_width > 0) {
      layer.scale_net = Mlp(store, lp + "scale.", {in_width, cfg.hidden, layer.n_tr}, rng);
      layer.shift_net = Mlp(store, lp + "shift.", {in_width, cfg.hidden, layer.n_tr}, rng);
    } else {
      layer.s_param = lp + "log_scale";
      layer.t_param = lp + "shift";
      store.create(layer.s_param, 1, 1);
      store.create(layer.t_param, 1, 1);
    }
    layers_.push_back(std::move(layer));
  }
}

FlowStack::Blocks FlowStack::split(Tape& tape, Var x, const CouplingLayer& layer) const {
  Blocks b;
  if (layer.n_pass == 0) {
    b.tr = x;
    b.pass = Var{};
    return b;
  }
  if (layer.transform_front) {
    b.tr = tape.slice_cols(x, 0, layer.n_tr);
    b.pass = tape.slice_cols(x, layer.n_tr, layer.n_pass);
  } else {
    b.pass = tape.slice_cols(x, 0, layer.n_pass);
    b.tr = tape.slice_cols(x, layer.n_pass, layer.n_tr);
  }
  return b;
}

Var FlowStack::join(Tape& tape, Var pass, Var tr, const CouplingLayer& layer) const {
  if (layer.n_pass == 0) return tr;
  return layer.transform_front ? tape.hstack(tr, pass) : tape.hstack(pass, tr);
}

std::pair<Var, Var> FlowStack::scale_shift(Tape& tape, ParameterStore& store,
                                           const CouplingLayer& layer, Var pass, Var cond,
                                           int nrows) const {
  if (!layer.scale_net) {
    Var s = tape.clamp(tape.param(store, layer.s_param), -layer.clamp, layer.clamp);
    Var t = tape.param(store, layer.t_param);
    return {s, t};
  }
  Var inp;
  if (layer.n_pass == 0) {
    inp = cond;
  } else if (layer.cond_dim == 0) {
    inp = pass;
  } else {
    inp = tape.hstack(pass, cond);
  }
  (void)nrows;
  Var s = tape.clamp(layer.scale_net->forward(tape, store, inp), -layer.clamp, layer.clamp);
  Var t = layer.shift_net->forward(tape, store, inp);
  return {s, t};
}

FlowResult FlowStack::forward(Tape& tape, ParameterStore& store, Var x, Var cond) const {
  check_finite(tape.value(x), "flow forward");
  if (cond_dim_ > 0 && (!cond.valid() || tape.value(cond).cols() != cond_dim_))
    throw std::invalid_argument("flow forward: conditioner width mismatch");
  const int nrows = static_cast<int>(tape.value(x).rows());
  Var logdet;
  Var cur = x;
  for (const auto& layer : layers_) {
    Blocks b = split(tape, cur, layer);
    auto [s, t] = scale_shift(tape, store, layer, b.pass, cond, nrows);
    Var y_tr = tape.add(tape.mul(b.tr, tape.exp(s)), t);
    cur = join(tape, b.pass, y_tr, layer);
    Var ld = row_logdet(tape, s, nrows);
    logdet = logdet.valid() ? tape.add(logdet, ld) : ld;
  }
  return {cur, logdet};
}

FlowResult FlowStack::inverse(Tape& tape, ParameterStore& store, Var y, Var cond) const {
  check_finite(tape.value(y), "flow inverse");
  if (cond_dim_ > 0 && (!cond.valid() || tape.value(cond).cols() != cond_dim_))
    throw std::invalid_argument("flow inverse: conditioner width mismatch");
  const int nrows = static_cast<int>(tape.value(y).rows());
  Var logdet_inv;
  Var cur = y;
  for (auto it = layers_.rbegin(); it != layers_.rend(); ++it) {
    const auto& layer = *it;
    Blocks b = split(tape, cur, layer);
    auto [s, t] = scale_shift(tape, store, layer, b.pass, cond, nrows);
    Var x_tr = tape.mul(tape.sub(b.tr, t), tape.exp(tape.neg(s)));
    cur = join(tape, b.pass, x_tr, layer);
    Var ld = row_logdet(tape, s, nrows);
    logdet_inv = logdet_inv.valid() ? tape.sub(logdet_inv, ld) : tape.neg(ld);
  }
  return {cur, logdet_inv};
}

// ---------------------------------------------------------------------------
// DynamicModel

DynamicModel::DynamicModel(ParameterStore& store, const std::string& prefix, int dim,
                           const FlowConfig& cfg, std::mt19937_64& rng)
    : dim_(dim), prefix_(prefix) {
  // Linear mean map acts by right multiplication: mean = x_prev * A + b.
  store.create(prefix_ + "A", Mat::Identity(dim, dim));
  store.create(prefix_ + "b", 1, dim);
  store.create(prefix_ + "log_var", 1, dim);
  flow_ = FlowStack(store, prefix_ + "flow.", dim, 0, cfg, rng);
}

std::pair<Var, Var> DynamicModel::base_moments(Tape& tape, ParameterStore& store,
                                               Var x_prev) const {
  Var mean = tape.add(tape.matmul(x_prev, tape.param(store, prefix_ + "A")),
                      tape.param(store, prefix_ + "b"));
  Var log_std = tape.scale(tape.param(store, prefix_ + "log_var"), 0.5);
  return {mean, log_std};
}

Sampled DynamicModel::sample(Tape& tape, ParameterStore& store, Var x_prev,
                             const Mat& noise) const {
  auto [mean, log_std] = base_moments(tape, store, x_prev);
  if (noise.rows() != tape.value(x_prev).rows() || noise.cols() != dim_)
    throw std::invalid_argument("dynamic sample: noise shape mismatch");
  Var x_dot = tape.add(mean, tape.mul(tape.exp(log_std), tape.constant(noise)));
  FlowResult f = flow_.forward(tape, store, x_dot, Var{});
  Var log_p = tape.sub(tape.gaussian_logpdf(x_dot, mean, log_std), f.logdet);
  return {f.y, log_p};
}

Var DynamicModel::logpdf(Tape& tape, ParameterStore& store, Var x, Var x_prev) const {
  FlowResult inv = flow_.inverse(tape, store, x, Var{});
  auto [mean, log_std] = base_moments(tape, store, x_prev);
  return tape.add(tape.gaussian_logpdf(inv.y, mean, log_std), inv.logdet);
}

// ---------------------------------------------------------------------------
// ProposalModel

ProposalModel::ProposalModel(ParameterStore& store, const std::string& prefix,
                             int state_dim, int obs_dim, const FlowConfig& cfg,
                             std::mt19937_64& rng)
    : state_dim_(state_dim), obs_dim_(obs_dim) {
  base_net_ = Mlp(store, prefix + "base.", {state_dim + obs_dim, cfg.hidden, 2 * state_dim},
                  rng);
  flow_ = FlowStack(store, prefix + "flow.", state_dim, obs_dim, cfg, rng);
}

std::pair<Var, Var> ProposalModel::base_moments(Tape& tape, ParameterStore& store,
                                                Var x_prev, Var y_tiled) const {
  Var out = base_net_.forward(tape, store, tape.hstack(x_prev, y_tiled));
  Var mean = tape.slice_cols(out, 0, state_dim_);
  Var log_std = tape.slice_cols(out, state_dim_, state_dim_);
  return {mean, log_std};
}

Sampled ProposalModel::sample(Tape& tape, ParameterStore& store, Var x_prev,
                              const Eigen::VectorXd& y, const Mat& noise) const {
  const int nrows = static_cast<int>(tape.value(x_prev).rows());
  if (noise.rows() != nrows || noise.cols() != state_dim_)
    throw std::invalid_argument("proposal sample: noise shape mismatch");
  Var y_tiled = tape.tile_rows(tape.constant(y.transpose()), nrows);
  auto [mean, log_std] = base_moments(tape, store, x_prev, y_tiled);
  Var x_hat = tape.add(mean, tape.mul(tape.exp(log_std), tape.constant(noise)));
  FlowResult f = flow_.forward(tape, store, x_hat, y_tiled);
  Var log_q = tape.sub(tape.gaussian_logpdf(x_hat, mean, log_std), f.logdet);
  return {f.y, log_q};
}

Var ProposalModel::logpdf(Tape& tape, ParameterStore& store, Var x, Var x_prev,
                          const Eigen::VectorXd& y) const {
  const int nrows = static_cast<int>(tape.value(x).rows());
  Var y_tiled = tape.tile_rows(tape.constant(y.transpose()), nrows);
  FlowResult inv = flow_.inverse(tape, store, x, y_tiled);
  auto [mean, log_std] = base_moments(tape, store, x_prev, y_tiled);
  return tape.add(tape.gaussian_logpdf(inv.y, mean, log_std), inv.logdet);
}

// ---------------------------------------------------------------------------
// MeasurementModel

MeasurementModel::MeasurementModel(ParameterStore& store, const std::string& prefix,
                                   int obs_dim, int state_dim, const FlowConfig& cfg,
                                   std::mt19937_64& rng)
    : obs_dim_(obs_dim), state_dim_(state_dim) {
  flow_ = FlowStack(store, prefix + "flow.", obs_dim, state_dim, cfg, rng);
}

Var MeasurementModel::loglik(Tape& tape, ParameterStore& store, const Eigen::VectorXd& y,
                             Var x) const {
  const int nrows = static_cast<int>(tape.value(x).rows());
  if (static_cast<int>(y.size()) != obs_dim_)
    throw std::invalid_argument("measurement loglik: observation dim mismatch");
  Var y_tiled = tape.tile_rows(tape.constant(y.transpose()), nrows);
  FlowResult inv = flow_.inverse(tape, store, y_tiled, x);
  Var zero = tape.constant(Mat::Zero(1, obs_dim_));
  Var log_pz = tape.gaussian_logpdf(inv.y, zero, zero);
  return tape.add(log_pz, inv.logdet);
}

// ---------------------------------------------------------------------------
// FlowModel

FlowModel::FlowModel(int state_dim, int obs_dim, const FlowConfig& cfg, std::uint64_t seed)
    : state_dim_(state_dim), obs_dim_(obs_dim), cfg_(cfg) {
  if (state_dim < 1 || obs_dim < 1)
    throw std::invalid_argument("FlowModel: dims must be positive");
  auto rng = make_rng(seed);
  dyn_ = DynamicModel(store_, "dyn.", state_dim, cfg, rng);
  prop_ = ProposalModel(store_, "prop.", state_dim, obs_dim, cfg, rng);
  meas_ = MeasurementModel(store_, "meas.", obs_dim, state_dim, cfg, rng);
}

Proposed FlowModel::propose(Tape& tape, Var x_prev, const Eigen::VectorXd& y,
                            const Mat& noise) {
  if (bootstrap_proposal_) {
    Sampled s = dyn_.sample(tape, store_, x_prev, noise);
    return {s.x, s.log_p};
  }
  Sampled s = prop_.sample(tape, store_, x_prev, y, noise);
  return {s.x, s.log_p};
}

Var FlowModel::transition_logpdf(Tape& tape, Var x, Var x_prev) {
  return dyn_.logpdf(tape, store_, x, x_prev);
}

Var FlowModel::measurement_loglik(Tape& tape, const Eigen::VectorXd& y, Var x) {
  return meas_.loglik(tape, store_, y, x);
}

Var FlowModel::proposal_logpdf(Tape& tape, Var x, Var x_prev, const Eigen::VectorXd& y) {
  return prop_.logpdf(tape, store_, x, x_prev, y);
}

void FlowModel::load_params(const ParameterStore& src) {
  for (const auto& name : store_.names()) {
    const Mat& v = src.value(name);
    Mat& dst = store_.value(name);
    if (v.rows() != dst.rows() || v.cols() != dst.cols())
      throw std::invalid_argument("load_params: shape mismatch for " + name);
    dst = v;
  }
}

}  // namespace oldpf::flows
