#include "oldpf/pf.hpp"

#include <cmath>
#include <limits>
#include <string>

#include "oldpf/rng.hpp"

namespace oldpf::pf {

FilterConfig FilterConfig::with_defaults(int num_particles, Eigen::MatrixXd bounds) {
  FilterConfig cfg;
  cfg.num_particles = num_particles;
  cfg.ess_threshold = num_particles / 2.0;
  cfg.init_bounds = std::move(bounds);
  cfg.validate();
  return cfg;
}

void FilterConfig::validate() const {
  if (num_particles < 2)
    throw std::invalid_argument("FilterConfig: need at least 2 particles");
  if (!(ess_threshold > 1.0) || ess_threshold > num_particles)
    throw std::invalid_argument("FilterConfig: ess_threshold must be in (1, N_p]");
  if (init_bounds.cols() != 2 || init_bounds.rows() < 1)
    throw std::invalid_argument("FilterConfig: init_bounds must be d x 2");
  for (Eigen::Index i = 0; i < init_bounds.rows(); ++i) {
    if (!std::isfinite(init_bounds(i, 0)) || !std::isfinite(init_bounds(i, 1)))
      throw std::invalid_argument("FilterConfig: init_bounds must be finite");
    if (init_bounds(i, 0) > init_bounds(i, 1))
      throw std::invalid_argument("FilterConfig: inverted bounds at dim " + std::to_string(i));
  }
}

ParticleEnsemble init_particles(Tape& tape, const FilterConfig& cfg, std::mt19937_64& rng) {
  cfg.validate();
  const int n = cfg.num_particles;
  const auto d = cfg.init_bounds.rows();
  Mat states(n, d);
  for (int i = 0; i < n; ++i)
    for (Eigen::Index j = 0; j < d; ++j) {
      const double lo = cfg.init_bounds(j, 0);
      const double hi = cfg.init_bounds(j, 1);
      states(i, j) = lo + (hi - lo) * uniform01(rng);
    }
  ParticleEnsemble ens;
  ens.states = tape.constant(std::move(states));
  Mat logw = Mat::Constant(n, 1, -std::log(static_cast<double>(n)));
  ens.log_w = tape.constant(logw);
  ens.log_w_tilde = ens.log_w;
  return ens;
}

ParticleEnsemble propose_and_weight(Tape& tape, const ParticleEnsemble& ens,
                                    const Eigen::VectorXd& y, SsmComponents& model,
                                    const Mat& noise) {
  if (!y.allFinite())
    throw std::domain_error("propose_and_weight: observation has non-finite entries");
  Proposed prop = model.propose(tape, ens.states, y, noise);
  Var trans = model.transition_logpdf(tape, prop.states, ens.states);
  Var meas = model.measurement_loglik(tape, y, prop.states);

  Var log_w = tape.add(ens.log_w_tilde,
                       tape.sub(tape.add(meas, trans), prop.log_q));

  // -inf (zero likelihood) is a legal per-particle weight; NaN/+inf is a bug.
  auto check = [&](Var v, const char* term) {
    const Mat& m = tape.value(v);
    for (Eigen::Index i = 0; i < m.rows(); ++i)
      if (std::isnan(m(i, 0)) || m(i, 0) == std::numeric_limits<double>::infinity())
        throw std::runtime_error(std::string("propose_and_weight: non-finite ") + term +
                                 " for particle " + std::to_string(i));
  };
  check(meas, "measurement log-likelihood");
  check(trans, "transition log-density");
  check(prop.log_q, "proposal log-density");
  check(log_w, "log-weight");
  if (!tape.value(prop.states).allFinite())
    throw std::runtime_error("propose_and_weight: non-finite proposed state");

  ParticleEnsemble out;
  out.states = prop.states;
  out.log_w = log_w;
  out.log_w_tilde = log_w;
  return out;
}

ParticleEnsemble propose_and_weight(Tape& tape, const ParticleEnsemble& ens,
                                    const Eigen::VectorXd& y, SsmComponents& model,
                                    std::mt19937_64& rng) {
  const int n = ens.count(tape);
  return propose_and_weight(tape, ens, y, model, randn(rng, n, model.state_dim()));
}

Var normalized_weights(Tape& tape, const ParticleEnsemble& ens) {
  const Mat& lw = tape.value(ens.log_w);
  if (!(lw.maxCoeff() > -std::numeric_limits<double>::infinity()))
    throw FilterCollapse("normalize: all log-weights are -inf (filter divergence)");
  return tape.exp(tape.sub(ens.log_w, tape.logsumexp(ens.log_w)));
}

Eigen::VectorXd normalize_values(const Eigen::VectorXd& log_w) {
  const double m = log_w.maxCoeff();
  if (!(m > -std::numeric_limits<double>::infinity()))
    throw FilterCollapse("normalize: all log-weights are -inf (filter divergence)");
  Eigen::VectorXd w = (log_w.array() - m).exp();
  return w / w.sum();
}

double ess(const Eigen::VectorXd& normalized) {
  return 1.0 / normalized.squaredNorm();
}

bool weight_degenerate(const Eigen::VectorXd& normalized) {
  return normalized.maxCoeff() > 1.0 - 1e-12;
}

void multinomial_resample(Tape& tape, ParticleEnsemble& ens, std::mt19937_64& rng) {
  const Eigen::VectorXd w = normalize_values(tape.value(ens.log_w).col(0));
  const int n = static_cast<int>(w.size());
  Eigen::VectorXd cdf(n);
  double acc = 0.0;
  for (int i = 0; i < n; ++i) {
    acc += w(i);
    cdf(i) = acc;
  }
  cdf(n - 1) = 1.0;
  std::vector<int> ancestors(n);
  for (int i = 0; i < n; ++i) {
    const double u = uniform01(rng);
    const double* pos = std::lower_bound(cdf.data(), cdf.data() + n, u);
    ancestors[i] = static_cast<int>(pos - cdf.data());
  }
  ens.states = tape.gather_rows(ens.states, ancestors);
  ens.log_w_tilde = tape.constant(Mat::Zero(n, 1));  // w~ = 1 for all i
  ens.resampled = true;
  ens.ancestors = std::move(ancestors);
}

Var estimate_state(Tape& tape, const ParticleEnsemble& ens) {
  Var w = normalized_weights(tape, ens);
  return tape.col_sum(tape.mul(w, ens.states));
}

}  // namespace oldpf::pf
